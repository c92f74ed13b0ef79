#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "navil/tensor.hpp"

namespace navil {

// Sub-seed for a named stream ("init", "data", "order", ...). Independent of
// every other stream name, so editing one part of a config never shifts the
// random numbers drawn elsewhere.
std::uint64_t derive_seed(std::uint64_t root, std::string_view stream);

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : gen_(seed) {}
  Rng(std::uint64_t root, std::string_view stream) : gen_(derive_seed(root, stream)) {}

  double normal(double mean, double stddev) { return std::normal_distribution<double>(mean, stddev)(gen_); }
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(gen_); }
  // Uniform integer in [lo, hi].
  int uniform_int(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(gen_); }
  std::mt19937_64& engine() { return gen_; }

  Tensor normal_tensor(Shape shape, double stddev);

 private:
  std::mt19937_64 gen_;
};

}  // namespace navil
