#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <cstring>
#include <vector>

#include "ff2/pipeline.hpp"
#include "ff2/train.hpp"
#include "support/configs.hpp"
#include "support/synthetic.hpp"

using ff2::Label;
using ff2::Rng;
using ff2::Tensor;
using ff2::TrainConfig;

namespace {

TrainConfig base_config(int max_epochs, double lr = 0.1) {
  TrainConfig c;
  c.learning_rate = lr;
  c.max_epochs = max_epochs;
  return c;
}

}  // namespace

TEST_CASE("adam: zero gradient leaves parameters unchanged, moments decay", "[train]") {
  Tensor theta = Tensor::from_values({2}, {1.5, -0.5}, true);
  std::vector<ff2::NamedTensor> params = {{"theta", theta}};
  ff2::AdamState state = ff2::init_adam_state(params);
  state.m[0] = {1.0, 1.0};
  state.v[0] = {1.0, 1.0};
  TrainConfig cfg = base_config(1);
  theta.zero_grad();  // g = 0
  ff2::adam_step(params, state, cfg);
  // m and v decay toward zero but m_hat/v_hat keep theta exactly still only
  // when m was already zero; with zero gradient and zero moments nothing
  // moves at all:
  Tensor fresh = Tensor::from_values({2}, {1.5, -0.5}, true);
  std::vector<ff2::NamedTensor> fresh_params = {{"theta", fresh}};
  ff2::AdamState fresh_state = ff2::init_adam_state(fresh_params);
  fresh.zero_grad();
  ff2::adam_step(fresh_params, fresh_state, cfg);
  REQUIRE(fresh.values() == std::vector<double>{1.5, -0.5});
  REQUIRE(fresh_state.m[0] == std::vector<double>{0.0, 0.0});
  REQUIRE(fresh_state.v[0] == std::vector<double>{0.0, 0.0});
  // decayed moments from the seeded state
  REQUIRE_THAT(state.m[0][0], Catch::Matchers::WithinAbs(0.9, 1e-15));
  REQUIRE_THAT(state.v[0][0], Catch::Matchers::WithinAbs(0.999, 1e-15));
}

TEST_CASE("adam: first step on f = theta^2/2 moves 1 to ~0.9", "[train]") {
  Tensor theta = Tensor::from_values({1}, {1.0}, true);
  std::vector<ff2::NamedTensor> params = {{"theta", theta}};
  ff2::AdamState state = ff2::init_adam_state(params);
  TrainConfig cfg = base_config(1, 0.1);
  theta.grad()[0] = theta.values()[0];  // grad of theta^2/2
  ff2::adam_step(params, state, cfg);
  // frozen: 1 - 0.1 / (1 + 1e-8) = 0.90000000099999999
  REQUIRE_THAT(theta.values()[0],
               Catch::Matchers::WithinAbs(0.9000000010, 1e-12));
}

TEST_CASE("adam: beta1 = beta2 = 0 degenerates to lr * g / (|g| + eps)", "[train]") {
  Tensor theta = Tensor::from_values({2}, {1.0, -4.0}, true);
  std::vector<ff2::NamedTensor> params = {{"theta", theta}};
  ff2::AdamState state = ff2::init_adam_state(params);
  TrainConfig cfg = base_config(1, 0.5);
  cfg.beta1 = 0.0;
  cfg.beta2 = 0.0;
  theta.grad()[0] = -2.0;
  theta.grad()[1] = 3.0;
  ff2::adam_step(params, state, cfg);
  REQUIRE_THAT(theta.values()[0],
               Catch::Matchers::WithinAbs(1.0 + 0.5 * 2.0 / (2.0 + 1e-8), 1e-12));
  REQUIRE_THAT(theta.values()[1],
               Catch::Matchers::WithinAbs(-4.0 - 0.5 * 3.0 / (3.0 + 1e-8), 1e-12));
}

TEST_CASE("adam: 1000 steps minimize a convex quadratic", "[train]") {
  Tensor theta = Tensor::from_values({1}, {10.0}, true);
  std::vector<ff2::NamedTensor> params = {{"theta", theta}};
  ff2::AdamState state = ff2::init_adam_state(params);
  TrainConfig cfg = base_config(1, 0.05);
  for (int step = 0; step < 1000; ++step) {
    theta.zero_grad();
    Tensor shifted = ff2::add(theta, Tensor::from_values({1}, {-3.0}));
    Tensor loss = ff2::scale(ff2::sum(ff2::mul(shifted, shifted)), 0.5);
    loss.backward();
    ff2::adam_step(params, state, cfg);
  }
  REQUIRE(std::fabs(theta.values()[0] - 3.0) < 1e-3);
}

TEST_CASE("adam: non-finite gradient raises a divergence error naming the parameter", "[train]") {
  Tensor theta = Tensor::from_values({1}, {1.0}, true);
  std::vector<ff2::NamedTensor> params = {{"ite.block0.attn.w_q", theta}};
  ff2::AdamState state = ff2::init_adam_state(params);
  theta.grad()[0] = std::nan("");
  REQUIRE_THROWS_MATCHES(
      ff2::adam_step(params, state, base_config(1)), ff2::NumericError,
      Catch::Matchers::MessageMatches(
          Catch::Matchers::ContainsSubstring("ite.block0.attn.w_q")));
}

TEST_CASE("early stopping: patience counter arithmetic", "[train]") {
  SECTION("patience 1 with a strictly worsening metric stops after epoch 2") {
    ff2::EarlyStopping stop;
    stop.patience = 1;
    REQUIRE_FALSE(stop.observe(1, 0.9));
    REQUIRE(stop.observe(2, 0.8));
    REQUIRE(stop.best_epoch == 1);
    REQUIRE(stop.since_best == 1);
  }
  SECTION("ties keep the earlier epoch") {
    ff2::EarlyStopping stop;
    stop.patience = 3;
    stop.observe(1, 0.7);
    stop.observe(2, 0.7);
    REQUIRE(stop.best_epoch == 1);
    REQUIRE(stop.since_best == 1);
  }
  SECTION("patience is respected across recoveries") {
    ff2::EarlyStopping stop;
    stop.patience = 2;
    REQUIRE_FALSE(stop.observe(1, 0.5));
    REQUIRE_FALSE(stop.observe(2, 0.4));
    REQUIRE_FALSE(stop.observe(3, 0.6));  // new best resets the counter
    REQUIRE_FALSE(stop.observe(4, 0.5));
    REQUIRE(stop.observe(5, 0.5));
    REQUIRE(stop.best_epoch == 3);
    REQUIRE(stop.since_best == 2);
  }
}

TEST_CASE("train: empty splits are configuration errors", "[train]") {
  Rng rng(1);
  ff2::FF2Config cfg = testcfg::tiny_ff2({1, 8, 2, 16}, {1, 4, 2, 8}, 2, 16, 8, 16);
  ff2::FF2Model model = ff2::init_model(cfg, rng);
  std::vector<ff2::LabeledSequence> data;
  TrainConfig tc = base_config(2);
  REQUIRE_THROWS_AS(ff2::train(model, data, data, tc, rng), ff2::ConfigError);
  TrainConfig missing_epochs;
  REQUIRE_THROWS_AS(missing_epochs.validate(), ff2::ConfigError);
}

TEST_CASE("train: returned model is the best checkpoint", "[train]") {
  const std::vector<ff2::LabeledDocument> docs = synthetic::trigger_corpus(20, 5);
  ff2::Vocabulary vocab = ff2::Vocabulary::build(docs, 1);
  ff2::FF2Config cfg = testcfg::tiny_ff2({1, 12, 2, 16}, {1, 4, 2, 8}, 2, 16,
                                         vocab.size(), 16);
  std::vector<ff2::LabeledSequence> data = ff2::encode_documents(docs, vocab, 16, 8);
  Rng rng(7);
  ff2::FF2Model model = ff2::init_model(cfg, rng);
  TrainConfig tc = base_config(6, 3e-3);
  tc.batch_size = 4;
  tc.patience = 6;
  ff2::TrainResult result = ff2::train(model, data, data, tc, rng);
  REQUIRE_FALSE(result.history.empty());
  // the restored parameters must reproduce the recorded best validation F1
  const ff2::EvalReport now = ff2::evaluate_model(model, data);
  REQUIRE(now.overall.f1 == result.best_val_f1);
  for (const ff2::EpochRecord& rec : result.history) {
    REQUIRE(rec.val.overall.f1 <= result.best_val_f1);
  }
}

TEST_CASE("train: loss trends downward on a separable toy problem", "[train]") {
  const std::vector<ff2::LabeledDocument> docs = synthetic::trigger_corpus(30, 17);
  ff2::Vocabulary vocab = ff2::Vocabulary::build(docs, 1);
  ff2::FF2Config cfg = testcfg::tiny_ff2({1, 12, 2, 16}, {1, 8, 2, 16}, 2, 24,
                                         vocab.size(), 16);
  std::vector<ff2::LabeledSequence> data = ff2::encode_documents(docs, vocab, 16, 8);
  Rng rng(3);
  ff2::FF2Model model = ff2::init_model(cfg, rng);
  TrainConfig tc = base_config(15, 2e-3);
  tc.batch_size = 4;
  tc.patience = 15;
  ff2::TrainResult result = ff2::train(model, data, data, tc, rng);
  REQUIRE(result.history.size() == 15);
  // smoothed trend: consecutive 5-epoch window means strictly decrease
  double means[3] = {0, 0, 0};
  for (int w = 0; w < 3; ++w) {
    for (int e = 0; e < 5; ++e) {
      means[w] += result.history[static_cast<std::size_t>(w * 5 + e)].train_loss / 5.0;
    }
  }
  REQUIRE(means[0] > means[1]);
  REQUIRE(means[1] > means[2]);
}

TEST_CASE("train: identical seed and config give bit-identical runs", "[train]") {
  auto run = [] {
    const std::vector<ff2::LabeledDocument> docs = synthetic::trigger_corpus(16, 9);
    ff2::Vocabulary vocab = ff2::Vocabulary::build(docs, 1);
    ff2::FF2Config cfg = testcfg::tiny_ff2({1, 8, 2, 12}, {1, 4, 2, 8}, 2, 12,
                                           vocab.size(), 16, true,
                                           ff2::AttentionMode::kInteraction, 0.1);
    std::vector<ff2::LabeledSequence> data = ff2::encode_documents(docs, vocab, 16, 8);
    Rng rng(123);
    ff2::FF2Model model = ff2::init_model(cfg, rng);
    TrainConfig tc;
    tc.learning_rate = 1e-3;
    tc.max_epochs = 3;
    tc.patience = 3;
    tc.batch_size = 4;
    ff2::TrainResult result = ff2::train(model, data, data, tc, rng);
    std::vector<double> flat;
    for (const ff2::NamedTensor& p : ff2::model_parameters(model)) {
      flat.insert(flat.end(), p.tensor.values().begin(), p.tensor.values().end());
    }
    for (const ff2::EpochRecord& rec : result.history) {
      flat.push_back(rec.train_loss);
      flat.push_back(rec.val.overall.f1);
    }
    return flat;
  };
  const std::vector<double> a = run();
  const std::vector<double> b = run();
  REQUIRE(a.size() == b.size());
  REQUIRE(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}
