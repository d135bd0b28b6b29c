#include <cmath>

#include "doctest.h"
#include "steprl/nn/optim.hpp"
#include "steprl/sft/sft.hpp"

using namespace steprl;

namespace {

nn::ModelConfig small_cfg() {
  nn::ModelConfig c;
  c.d = 16;
  c.layers = 1;
  c.heads = 2;
  c.context = 64;
  return c;
}

std::vector<synth::TokenSeq> some_seqs(int n, std::uint64_t seed) {
  std::vector<synth::TokenSeq> out;
  for (int i = 0; i < n; ++i) {
    auto p = synth::generate_problem(synth::Family::Simple, seed + static_cast<std::uint64_t>(i));
    out.push_back(synth::encode(p, synth::solve_reference(p)));
  }
  return out;
}

}  // namespace

TEST_CASE("make_batch masks prompt and padding") {
  auto seqs = some_seqs(3, 5);
  auto b = sft::make_batch(seqs);
  REQUIRE(b.tokens.size() == 3);
  for (std::size_t r = 0; r < 3; ++r) {
    const auto& s = seqs[r];
    for (std::size_t t = 0; t < b.tokens[r].size(); ++t) {
      const bool inside = t >= static_cast<std::size_t>(s.prompt_length) && t < s.tokens.size();
      CHECK(b.mask[r][t] == (inside ? 1.0 : 0.0));
      if (t >= s.tokens.size()) CHECK(b.tokens[r][t] == synth::tok::kPad);
    }
    CHECK(b.mask[r][s.tokens.size() - 1] == 1.0);  // EOS is a target
  }
}

TEST_CASE("uniform model gives ln V") {
  auto p = nn::zeros_like(small_cfg());
  auto b = sft::make_batch(some_seqs(4, 11));
  CHECK(sft::sft_loss(p, b) == doctest::Approx(std::log(22.0)).epsilon(1e-12));
}

TEST_CASE("duplicated batch has the same loss and gradient") {
  auto p = nn::init_model(small_cfg(), 3);
  auto seqs = some_seqs(3, 21);
  auto twice = seqs;
  twice.insert(twice.end(), seqs.begin(), seqs.end());
  auto g1 = nn::zeros_like(p.cfg), g2 = nn::zeros_like(p.cfg);
  const double l1 = sft::sft_loss(p, sft::make_batch(seqs), &g1);
  const double l2 = sft::sft_loss(p, sft::make_batch(twice), &g2);
  CHECK(l1 == doctest::Approx(l2).epsilon(1e-12));
  auto a = g1.tensors();
  auto c = g2.tensors();
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t k = 0; k < a[i]->size(); ++k) CHECK(std::abs((*a[i])[k] - (*c[i])[k]) < 1e-12);
}

TEST_CASE("prompt tokens do not affect the loss through targets") {
  auto p = nn::init_model(small_cfg(), 4);
  auto seqs = some_seqs(1, 31);
  auto b = sft::make_batch(seqs);
  // Masking out everything but the EOS target gives exactly -log p(EOS | prefix).
  for (auto& m : b.mask[0]) m = 0.0;
  const int eos = static_cast<int>(seqs[0].tokens.size()) - 1;
  b.mask[0][static_cast<std::size_t>(eos)] = 1.0;
  auto logits = nn::infer(p, std::span<const int>(seqs[0].tokens.data(), static_cast<std::size_t>(eos)), nn::Head::LM);
  std::vector<double> last(logits.data.end() - 22, logits.data.end());
  double mx = *std::max_element(last.begin(), last.end()), z = 0;
  for (double x : last) z += std::exp(x - mx);
  const double expect = -(last[synth::tok::kEos] - mx - std::log(z));
  CHECK(sft::sft_loss(p, b) == doctest::Approx(expect).epsilon(1e-10));
}

TEST_CASE("sft_loss rejects an empty mask") {
  auto p = nn::zeros_like(small_cfg());
  auto b = sft::make_batch(some_seqs(2, 1));
  for (auto& row : b.mask)
    for (auto& m : row) m = 0.0;
  CHECK_THROWS_AS(sft::sft_loss(p, b), std::invalid_argument);
}

TEST_CASE("training reduces held-out loss and keeps the best epoch") {
  synth::CorpusSpec spec;
  auto train = synth::make_clean_split(spec, {48, 0}, synth::split_base::kSft);
  auto val = synth::make_clean_split(spec, {16, 0}, synth::split_base::kSftVal);
  sft::SftConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 8;
  cfg.batch_divisor = 1;
  cfg.lr = 1e-3;
  cfg.lr_scale = 1;
  MetricsLog log;
  auto res = sft::train_sft(nn::init_model(small_cfg(), 9), train, val, cfg, log);
  CHECK(res.best_val_loss < res.init_val_loss);
  CHECK(log.series("train", "loss").size() == 3);
  CHECK(log.series("val", "loss").size() == 4);
  CHECK(res.best_epoch >= 1);
}

TEST_CASE("train_sft refuses incorrect solutions") {
  synth::CorpusSpec spec;
  auto rm = synth::make_rm_split(spec, {4, 0}, synth::split_base::kRm);
  MetricsLog log;
  CHECK_THROWS_AS(sft::train_sft(nn::init_model(small_cfg(), 1), rm, rm, {}, log), std::invalid_argument);
}

TEST_CASE("generation scoring") {
  auto p = synth::parse_prompt("7 + 5 * 2 ?", synth::Family::Simple);
  auto ids = [](const std::string& s, bool eos) {
    auto v = synth::Vocabulary::encode_text(s);
    if (eos) v.push_back(synth::tok::kEos);
    return v;
  };
  auto good = sft::evaluate_generation(p, ids("7+5=12;12*2=24;#24", true));
  CHECK(good.correct);
  CHECK(good.well_formed);
  CHECK(good.steps_correct == 2);
  auto bad = sft::evaluate_generation(p, ids("7+5=13;13*2=26;#26", true));
  CHECK_FALSE(bad.correct);
  CHECK(bad.well_formed);
  CHECK(bad.steps_total == 2);
  CHECK(bad.steps_correct == 1);  // second step is arithmetic-correct from the claimed lhs
  auto cut = sft::evaluate_generation(p, ids("7+5=12;12*2=24;#24", false));
  CHECK_FALSE(cut.well_formed);
  CHECK_FALSE(cut.correct);
  CHECK(cut.steps_correct == 2);
  auto m = sft::summarize({good, bad, cut});
  CHECK(m.accuracy == doctest::Approx(1.0 / 3));
  CHECK(m.well_formed_rate == doctest::Approx(2.0 / 3));
  CHECK(m.step_correctness == doctest::Approx(5.0 / 6));
}

TEST_CASE("eval on a random model is well defined and order invariant") {
  auto p = nn::init_model(small_cfg(), 2);
  std::vector<synth::Problem> probs;
  for (int i = 0; i < 6; ++i) probs.push_back(synth::generate_problem(synth::Family::Simple, 100 + i));
  auto a = sft::eval_accuracy(p, probs);
  std::reverse(probs.begin(), probs.end());
  auto b = sft::eval_accuracy(p, probs);
  CHECK(a.accuracy == b.accuracy);
  CHECK(a.step_correctness == b.step_correctness);
  CHECK(a.accuracy <= 0.2);
  CHECK_THROWS_AS(sft::eval_accuracy(p, {}), std::invalid_argument);
}
