#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "steprl/nn/model.hpp"

namespace steprl::nn {

// Incremental evaluation with cached keys and values. Produces the same
// numbers as forward() up to rounding, without recording a graph.
class Decoder {
 public:
  explicit Decoder(const ModelParams& p);

  void reset();
  int length() const { return len_; }
  // Appends a token; returns the final-normalized hidden state for it.
  const std::vector<double>& push(int token);

  std::vector<double> lm_logits() const;
  double value() const;
  std::vector<double> classifier_logits() const;

 private:
  const ModelParams& p_;
  std::vector<RowMajorMat> kcache_, vcache_;
  std::vector<double> hidden_;
  int len_ = 0;
};

// Stable log-softmax of one row.
std::vector<double> log_softmax(std::span<const double> logits);
// Index of the largest entry; ties go to the lowest index.
int argmax(std::span<const double> xs);

struct SampleOptions {
  double temperature = 1.0;  // 0 selects argmax decoding
  int max_new = 64;
  int eos_id = -1;  // stop after emitting this id
  std::uint64_t seed = 0;
};

struct SampleResult {
  std::vector<int> continuation;
  // Untempered log-probability of each emitted token under the model.
  std::vector<double> logprobs;
};

// Throws std::invalid_argument on an empty or overlong prompt or negative
// temperature. Generation also stops when the context is full.
SampleResult sample(const ModelParams& p, std::span<const int> prompt, const SampleOptions& opt);

}  // namespace steprl::nn
