#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest.h"
#include "steprl/common/alloc.hpp"

int main(int argc, char** argv) {
  steprl::tune_allocator();
  return doctest::Context(argc, argv).run();
}
