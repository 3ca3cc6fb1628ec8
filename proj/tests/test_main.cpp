#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "specrl/common.hpp"

int main(int argc, char** argv) {
  specrl::enable_flush_to_zero();
  return doctest::Context(argc, argv).run();
}
