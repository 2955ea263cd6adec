#include <gtest/gtest.h>

#include "semcast/alloc_tuning.hpp"

int main(int argc, char** argv) {
  semcast::tune_allocator();
  ::testing::InitGoogleTest(&argc, argv);
  return RUN_ALL_TESTS();
}
