#include "specrl/spectral_oracle.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>
#include <cmath>
#include <numeric>
#include <sstream>

namespace specrl {

namespace {
Eigen::JacobiSVD<Mat> full_svd(const Mat& m) {
  return Eigen::JacobiSVD<Mat>(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
}
}  // namespace

int transition_rank(const TabularMDP& mdp) {
  auto svd = full_svd(mdp.transition);
  const Vec& sigma = svd.singularValues();
  double thresh = 1e-10 * std::max(1.0, sigma(0));
  int rank = 0;
  for (int i = 0; i < sigma.size(); ++i)
    if (sigma(i) > thresh) ++rank;
  return rank;
}

SpectralFactorization exact_factorization(const TabularMDP& mdp, int d) {
  mdp.validate();
  int max_d = static_cast<int>(std::min(mdp.transition.rows(), mdp.transition.cols()));
  if (d < 1 || d > max_d) throw std::invalid_argument("exact_factorization: invalid rank d");
  auto svd = full_svd(mdp.transition);
  SpectralFactorization fac;
  fac.singular_values = svd.singularValues().head(d);
  fac.phi = svd.matrixU().leftCols(d) * fac.singular_values.asDiagonal();
  fac.mu = svd.matrixV().leftCols(d);
  return fac;
}

QWeights fit_linear_weights(const Mat& basis, const Vec& target) {
  QWeights out;
  out.eta = basis.colPivHouseholderQr().solve(target);
  out.residual = (basis * out.eta - target).norm();
  return out;
}

QWeights fit_q_weights(const SpectralFactorization& fac, const Mat& q_table) {
  Vec q_flat(q_table.size());
  int k = 0;
  for (int s = 0; s < q_table.rows(); ++s)
    for (int a = 0; a < q_table.cols(); ++a) q_flat(k++) = q_table(s, a);
  return fit_linear_weights(fac.phi, q_flat);
}

double scaled_svd_objective(const TabularMDP& mdp, const Vec& rho, const Mat& phi, const Mat& nu) {
  mdp.validate();
  const int n = mdp.n_states * mdp.n_actions;
  if (rho.size() != n) throw std::invalid_argument("scaled_svd_objective: rho size mismatch");
  if (rho.minCoeff() <= 0.0)
    throw std::invalid_argument("scaled_svd_objective: rho must be strictly positive");
  if (phi.rows() != n || nu.rows() != mdp.n_states || phi.cols() != nu.cols())
    throw std::invalid_argument("scaled_svd_objective: shape mismatch");

  Vec marginal = mdp.transition.transpose() * rho;  // P(s') under rho
  if (marginal.minCoeff() <= 0.0)
    throw std::invalid_argument("scaled_svd_objective: zero-probability next-state marginal");

  Mat inner = phi * nu.transpose();  // (S*A) x S
  double positive = 0.0, negative = 0.0;
  for (int r = 0; r < n; ++r) {
    for (int s2 = 0; s2 < mdp.n_states; ++s2) {
      double joint = rho(r) * mdp.transition(r, s2);
      positive += joint * inner(r, s2);
      negative += rho(r) * marginal(s2) * inner(r, s2) * inner(r, s2);
    }
  }
  return 2.0 * positive - negative;
}

Mat scaled_transition_kernel(const TabularMDP& mdp, const Vec& rho) {
  Vec marginal = mdp.transition.transpose() * rho;
  Mat kernel = mdp.transition;
  for (int r = 0; r < kernel.rows(); ++r)
    for (int c = 0; c < kernel.cols(); ++c)
      kernel(r, c) *= std::sqrt(rho(r)) / std::sqrt(marginal(c));
  return kernel;
}

Mat top_left_singular_subspace(const Mat& m, int d) {
  auto svd = full_svd(m);
  return svd.matrixU().leftCols(d);
}

double max_principal_angle_deg(const Mat& a, const Mat& b) {
  Mat qa = Eigen::HouseholderQR<Mat>(a).householderQ() * Mat::Identity(a.rows(), a.cols());
  Mat qb = Eigen::HouseholderQR<Mat>(b).householderQ() * Mat::Identity(b.rows(), b.cols());
  Eigen::JacobiSVD<Mat> svd(qa.transpose() * qb);
  double smin = svd.singularValues().minCoeff();
  return std::acos(clampd(smin, -1.0, 1.0)) * 180.0 / M_PI;
}

namespace {

// Connected components of the graph s -> s' with P^pi(s'|s) > tol, treating
// edges as undirected (enough to name the reducible pieces in errors).
std::vector<int> weak_components(const Mat& ppi, double tol) {
  const int n = static_cast<int>(ppi.rows());
  std::vector<int> comp(n, -1);
  int next = 0;
  for (int start = 0; start < n; ++start) {
    if (comp[start] >= 0) continue;
    std::vector<int> stack{start};
    comp[start] = next;
    while (!stack.empty()) {
      int s = stack.back();
      stack.pop_back();
      for (int t = 0; t < n; ++t) {
        if (comp[t] < 0 && (ppi(s, t) > tol || ppi(t, s) > tol)) {
          comp[t] = next;
          stack.push_back(t);
        }
      }
    }
    ++next;
  }
  return comp;
}

bool strongly_connected(const Mat& ppi, double tol) {
  const int n = static_cast<int>(ppi.rows());
  auto reach = [&](bool forward) {
    std::vector<bool> seen(n, false);
    std::vector<int> stack{0};
    seen[0] = true;
    while (!stack.empty()) {
      int s = stack.back();
      stack.pop_back();
      for (int t = 0; t < n; ++t) {
        double w = forward ? ppi(s, t) : ppi(t, s);
        if (!seen[t] && w > tol) {
          seen[t] = true;
          stack.push_back(t);
        }
      }
    }
    return seen;
  };
  auto fwd = reach(true);
  auto bwd = reach(false);
  for (int s = 0; s < n; ++s)
    if (!fwd[s] || !bwd[s]) return false;
  return true;
}

Vec stationary_distribution(const Mat& ppi) {
  const int n = static_cast<int>(ppi.rows());
  // Solve pi^T (P - I) = 0 with the last equation replaced by normalization.
  Mat system = (ppi.transpose() - Mat::Identity(n, n));
  system.row(n - 1).setOnes();
  Vec rhs = Vec::Zero(n);
  rhs(n - 1) = 1.0;
  return system.partialPivLu().solve(rhs);
}

}  // namespace

Mat table1_reps(const TabularMDP& mdp, const TabularPolicy& policy, Table1Kind kind, int d_or_k) {
  mdp.validate();
  policy.validate();
  if (d_or_k < 1) throw std::invalid_argument("table1_reps: need d or k >= 1");
  Mat ppi = state_transition(mdp, policy);
  const int n = mdp.n_states;

  switch (kind) {
    case Table1Kind::successor: {
      Mat successor = (Mat::Identity(n, n) - mdp.gamma * ppi).partialPivLu().solve(Mat::Identity(n, n));
      if (d_or_k > n) throw std::invalid_argument("table1_reps: d exceeds state count");
      return top_left_singular_subspace(successor, d_or_k);
    }
    case Table1Kind::laplacian: {
      constexpr double kEdgeTol = 1e-12;
      if (!strongly_connected(ppi, kEdgeTol)) {
        auto comp = weak_components(ppi, kEdgeTol);
        std::ostringstream msg;
        msg << "table1_reps: chain is not ergodic; components:";
        int n_comp = *std::max_element(comp.begin(), comp.end()) + 1;
        for (int c = 0; c < n_comp; ++c) {
          msg << " {";
          bool first = true;
          for (int s = 0; s < n; ++s)
            if (comp[s] == c) {
              msg << (first ? "" : ",") << s;
              first = false;
            }
          msg << "}";
        }
        throw std::invalid_argument(msg.str());
      }
      Vec stat = stationary_distribution(ppi);
      Mat lambda = stat.asDiagonal();
      Mat sym = lambda * ppi + ppi.transpose() * lambda;
      Eigen::SelfAdjointEigenSolver<Mat> eig(sym);
      if (d_or_k > n) throw std::invalid_argument("table1_reps: d exceeds state count");
      // SelfAdjointEigenSolver sorts ascending; take the top eigenvectors.
      return eig.eigenvectors().rightCols(d_or_k).rowwise().reverse();
    }
    case Table1Kind::krylov: {
      Vec r_pi(n);
      for (int s = 0; s < n; ++s)
        r_pi(s) = (policy.probs.row(s).array() * mdp.reward.row(s).array()).sum();
      Mat out(n, d_or_k);
      Vec cur = r_pi;
      for (int i = 0; i < d_or_k; ++i) {
        cur = ppi * cur;
        out.col(i) = cur;
      }
      return out;
    }
  }
  throw std::logic_error("table1_reps: unknown kind");
}

double occupancy_factorization_check(const TabularMDP& mdp, const TabularPolicy& policy,
                                     const SpectralFactorization& fac) {
  Mat d_pi = occupancy_measure(mdp, policy);
  const int n = mdp.n_states * mdp.n_actions;
  Mat basis(n, fac.mu.cols());
  Vec target(n);
  for (int s = 0; s < mdp.n_states; ++s) {
    for (int a = 0; a < mdp.n_actions; ++a) {
      basis.row(mdp.row(s, a)) = fac.mu.row(s) * policy.probs(s, a);
      target(mdp.row(s, a)) = d_pi(s, a);
    }
  }
  return fit_linear_weights(basis, target).residual;
}

TabularMDP random_linear_reward_mdp(int n_states, int n_actions, double gamma,
                                    std::mt19937_64& rng) {
  TabularMDP mdp = random_mdp(n_states, n_actions, gamma, rng);
  int rank = transition_rank(mdp);
  SpectralFactorization fac = exact_factorization(mdp, rank);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vec theta_r(rank);
  for (int i = 0; i < rank; ++i) theta_r(i) = gauss(rng);
  Vec r_flat = fac.phi * theta_r;
  for (int s = 0; s < n_states; ++s)
    for (int a = 0; a < n_actions; ++a) mdp.reward(s, a) = r_flat(mdp.row(s, a));
  return mdp;
}

}  // namespace specrl
