#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "marl/neural.hpp"

using namespace marl;

namespace {

NetworkShape shape_of(int layers, bool separate = false) {
  NetworkShape s;
  s.input_dim = 10;
  s.hidden_layers = layers;
  s.separate_value = separate;
  return s;
}

PolicyParams random_params(const NetworkShape& shape, std::uint64_t seed) {
  Rng rng = make_stream(seed, "params");
  std::normal_distribution<double> n(0.0, 0.3);
  PolicyParams p(shape);
  for (Eigen::Index k = 0; k < p.data().size(); ++k) p.data()(k) = n(rng);
  return p;
}

std::vector<double> random_obs(int dim, std::uint64_t seed) {
  Rng rng = make_stream(seed, "obs");
  std::normal_distribution<double> n(0.0, 1.0);
  std::vector<double> x(dim);
  for (auto& v : x) v = n(rng);
  return x;
}

// Plain loops over the documented flat layout, written without Eigen.
struct Oracle {
  std::vector<double> mean;
  double value;
};

Oracle oracle_forward(const NetworkShape& s, const std::vector<double>& flat, std::vector<double> x) {
  std::size_t off = 0;
  auto linear = [&](const std::vector<double>& in, int rows, bool act) {
    const int cols = static_cast<int>(in.size());
    std::vector<double> out(rows, 0.0);
    for (int r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (int c = 0; c < cols; ++c) acc += flat[off + static_cast<std::size_t>(c) * rows + r] * in[c];
      out[r] = acc;
    }
    off += static_cast<std::size_t>(rows) * cols;
    for (int r = 0; r < rows; ++r) {
      out[r] += flat[off + r];
      if (act) out[r] = std::tanh(out[r]);
    }
    off += rows;
    return out;
  };
  const std::vector<double> input = x;
  for (int l = 0; l < s.hidden_layers; ++l) x = linear(x, s.hidden_units, true);
  Oracle o;
  o.mean = linear(x, s.action_dim, false);
  const std::size_t value_head = off;
  std::vector<double> v_in = x;
  if (s.separate_value) {
    off += static_cast<std::size_t>(s.hidden_units) + 1;  // skip the value head for now
    v_in = input;
    for (int l = 0; l < s.hidden_layers; ++l) v_in = linear(v_in, s.hidden_units, true);
    const std::size_t end = off;
    off = value_head;
    o.value = linear(v_in, 1, false)[0];
    off = end;
  } else {
    o.value = linear(v_in, 1, false)[0];
  }
  return o;
}

}  // namespace

TEST(Forward, ZeroNetworkOutputsZero) {
  const PolicyParams p(shape_of(2));
  const PolicyOutput out = forward(p, random_obs(10, 1));
  EXPECT_EQ(out.mean(0), 0.0);
  EXPECT_EQ(out.mean(1), 0.0);
  EXPECT_EQ(out.value, 0.0);
}

TEST(Forward, PureFunction) {
  const PolicyParams p = random_params(shape_of(3), 2);
  const auto x = random_obs(10, 2);
  const PolicyOutput a = forward(p, x), b = forward(p, x);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.value, b.value);
}

TEST(Forward, MatchesLoopOracle) {
  for (bool separate : {false, true}) {
    for (int layers : {1, 2, 3}) {
      const NetworkShape s = shape_of(layers, separate);
      const PolicyParams p = random_params(s, 10 + layers);
      const std::vector<double> flat(p.data().data(), p.data().data() + p.data().size());
      for (int trial = 0; trial < 5; ++trial) {
        const auto x = random_obs(10, 100 * layers + trial);
        const PolicyOutput out = forward(p, x);
        const Oracle o = oracle_forward(s, flat, x);
        for (int k = 0; k < 2; ++k) EXPECT_NEAR(out.mean(k), o.mean[k], 1e-12 * std::max(1.0, std::abs(o.mean[k])));
        EXPECT_NEAR(out.value, o.value, 1e-12 * std::max(1.0, std::abs(o.value)));
      }
    }
  }
}

TEST(Forward, BatchEqualsSingle) {
  const PolicyParams p = random_params(shape_of(2, true), 4);
  Eigen::MatrixXd X(10, 7);
  for (int c = 0; c < 7; ++c) {
    const auto x = random_obs(10, 40 + c);
    for (int r = 0; r < 10; ++r) X(r, c) = x[r];
  }
  const ForwardCache cache = forward_batch(p, X);
  for (int c = 0; c < 7; ++c) {
    const auto out = forward(p, std::vector<double>(X.col(c).data(), X.col(c).data() + 10));
    EXPECT_NEAR(cache.mean(0, c), out.mean(0), 1e-13);
    EXPECT_NEAR(cache.value(c), out.value, 1e-13);
  }
}

TEST(Forward, DimensionMismatchThrows) {
  const PolicyParams p(shape_of(2));
  EXPECT_THROW(forward(p, std::vector<double>(9, 0.0)), std::invalid_argument);
}

TEST(Params, LayoutSize) {
  const PolicyParams p(shape_of(2));
  const std::size_t expected = (10 * 128 + 128) + (128 * 128 + 128) + (128 * 2 + 2) + (128 + 1) + 2;
  EXPECT_EQ(p.size(), expected);
  const PolicyParams q(shape_of(2, true));
  EXPECT_EQ(q.size(), expected + (10 * 128 + 128) + (128 * 128 + 128));
}

TEST(Params, InitializationScheme) {
  Rng rng = make_stream(1, "init");
  const PolicyParams p = PolicyParams::initialized(shape_of(2), rng);
  EXPECT_TRUE(p.log_std().isZero());
  for (int l = 0; l < p.num_linear(); ++l) EXPECT_TRUE(p.bias(l).isZero());
  // Orthogonal hidden weights with gain sqrt(2): W W^T = 2 I on the square layer.
  const Eigen::MatrixXd w = p.weight(1);
  EXPECT_LT((w * w.transpose() - 2.0 * Eigen::MatrixXd::Identity(128, 128)).cwiseAbs().maxCoeff(), 1e-10);
  EXPECT_LT(p.weight(p.mean_head()).cwiseAbs().maxCoeff(), 0.02);
}

TEST(Params, LogStdClamp) {
  PolicyParams p(shape_of(2));
  p.log_std()(0) = -50;
  p.log_std()(1) = 7;
  EXPECT_EQ(p.effective_log_std()(0), kLogStdMin);
  EXPECT_EQ(p.effective_log_std()(1), kLogStdMax);
  p.clamp_log_std();
  EXPECT_EQ(p.log_std()(1), kLogStdMax);
}

TEST(Sampling, VanishingVarianceReturnsMean) {
  PolicyParams p = random_params(shape_of(2), 5);
  p.log_std().setConstant(-20.0);
  const auto x = random_obs(10, 5);
  const PolicyOutput out = forward(p, x);
  Rng rng = make_stream(5, "sample");
  for (int k = 0; k < 100; ++k) {
    const DistributionSample s = sample_action(p, x, rng);
    EXPECT_NEAR(s.action_raw(0), out.mean(0), 1e-7);
    EXPECT_NEAR(s.action_raw(1), out.mean(1), 1e-7);
  }
}

TEST(Sampling, AffineActionMap) {
  Eigen::VectorXd raw(2);
  raw << 1.0, 0.0;
  EXPECT_EQ(action_from_raw(raw), Action(0.05, 0.0));
  raw << -1.0, -1.0;
  EXPECT_EQ(action_from_raw(raw), Action(0.0, -kPi));
  raw << 7.0, 0.5;  // clipped
  const Action a = action_from_raw(raw);
  EXPECT_DOUBLE_EQ(a.v(), 0.05);
  EXPECT_DOUBLE_EQ(a.omega(), 0.5 * kPi);
  raw << 1.5, -3.0;  // clip 3: divide by 3 after clipping
  const Action b = action_from_raw(raw, 3.0);
  EXPECT_DOUBLE_EQ(b.v(), 0.05 * 0.75);
  EXPECT_DOUBLE_EQ(b.omega(), -kPi);
}

TEST(Sampling, LogProbIsOnUnclippedDraw) {
  PolicyParams p = random_params(shape_of(2), 6);
  p.log_std() << 1.5, 1.5;
  const auto x = random_obs(10, 6);
  const PolicyOutput out = forward(p, x);
  Rng rng = make_stream(6, "sample");
  for (int k = 0; k < 50; ++k) {
    const DistributionSample s = sample_action(p, x, rng);
    double expected = 0.0;
    for (int d = 0; d < 2; ++d) {
      const double sd = std::exp(1.5);
      const double z = (s.action_raw(d) - out.mean(d)) / sd;
      expected += -0.5 * z * z - std::log(sd) - 0.5 * std::log(2 * kPi);
    }
    EXPECT_NEAR(s.log_prob, expected, 1e-12);
  }
}

TEST(Gaussian, EntropyClosedForm) {
  EXPECT_NEAR(gaussian_entropy(Eigen::VectorXd::Zero(2)), 2.837877, 1e-6);
  EXPECT_NEAR(gaussian_entropy(Eigen::VectorXd::Zero(2)), std::log(2 * kPi * std::exp(1.0)), 1e-14);
}

TEST(GaussianProperty, ProductOfDensities) {
  Rng rng = make_stream(7, "lp");
  std::normal_distribution<double> n(0.0, 1.0);
  for (int k = 0; k < 1000; ++k) {
    Eigen::VectorXd x(2), m(2), ls(2);
    for (int d = 0; d < 2; ++d) {
      x(d) = n(rng);
      m(d) = n(rng);
      ls(d) = 0.5 * n(rng);
    }
    double product = 1.0;
    for (int d = 0; d < 2; ++d) {
      const double sd = std::exp(ls(d));
      product *= std::exp(-0.5 * std::pow((x(d) - m(d)) / sd, 2)) / (sd * std::sqrt(2 * kPi));
    }
    EXPECT_NEAR(std::exp(gaussian_log_prob(x, m, ls)) / product, 1.0, 1e-12);
  }
}

TEST(GaussianProperty, EntropyMatchesMonteCarlo) {
  Rng rng = make_stream(8, "mc");
  Eigen::VectorXd m(2), ls(2);
  m << 0.3, -0.7;
  ls << -0.4, 0.6;
  std::normal_distribution<double> n(0.0, 1.0);
  double sum = 0.0;
  const int samples = 1'000'000;
  Eigen::VectorXd x(2);
  for (int k = 0; k < samples; ++k) {
    for (int d = 0; d < 2; ++d) x(d) = m(d) + std::exp(ls(d)) * n(rng);
    sum -= gaussian_log_prob(x, m, ls);
  }
  const double mc = sum / samples;
  EXPECT_NEAR(mc / gaussian_entropy(ls), 1.0, 0.01);
}

TEST(Backward, ValueHeadClosedForm) {
  // L = 0.5 (v - y)^2 with one hidden layer: dL/dW_v = (v - y) h, dL/db_v = (v - y).
  const PolicyParams p = random_params(shape_of(1), 9);
  const auto x = random_obs(10, 9);
  Eigen::MatrixXd X = Eigen::Map<const Eigen::VectorXd>(x.data(), 10);
  const ForwardCache cache = forward_batch(p, X);
  const double y = 0.7;
  const double r = cache.value(0) - y;
  Eigen::RowVectorXd dv(1);
  dv << r;
  const Eigen::VectorXd g =
      backward(p, cache, Eigen::MatrixXd::Zero(2, 1), dv, Eigen::VectorXd::Zero(2));
  PolicyParams grad(p.shape());
  grad.data() = g;
  const Eigen::VectorXd h = cache.hidden[0].col(0);
  EXPECT_LT((grad.weight(p.value_head()).transpose().col(0) - r * h).cwiseAbs().maxCoeff(), 1e-14);
  EXPECT_NEAR(grad.bias(p.value_head())(0), r, 1e-14);
  EXPECT_TRUE(grad.weight(p.mean_head()).isZero());
  // Hidden layer: dL/db_0 = r * W_v^T (1 - h^2).
  const Eigen::VectorXd expected_b0 =
      r * p.weight(p.value_head()).transpose().col(0).cwiseProduct((1.0 - h.array().square()).matrix());
  EXPECT_LT((grad.bias(0) - expected_b0).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Backward, ConstantLossGivesZeroGradient) {
  const PolicyParams p = random_params(shape_of(2, true), 10);
  Eigen::MatrixXd X = Eigen::MatrixXd::Random(10, 4);
  const ForwardCache cache = forward_batch(p, X);
  const Eigen::VectorXd g = backward(p, cache, Eigen::MatrixXd::Zero(2, 4),
                                     Eigen::RowVectorXd::Zero(4), Eigen::VectorXd::Zero(2));
  EXPECT_TRUE(g.isZero());
}

TEST(BackwardProperty, FiniteDifferencesOnQuadraticLoss) {
  // L = sum(a .* mean) + sum(b .* value) + c . log_std, so upstream grads are a, b, c.
  for (bool separate : {false, true}) {
    for (int layers : {2, 3}) {
      PolicyParams p = random_params(shape_of(layers, separate), 20 + layers);
      Rng rng = make_stream(layers, "fd");
      const Eigen::MatrixXd X = Eigen::MatrixXd::Random(10, 5);
      const Eigen::MatrixXd a = Eigen::MatrixXd::Random(2, 5);
      const Eigen::RowVectorXd b = Eigen::RowVectorXd::Random(5);
      const Eigen::VectorXd c = Eigen::VectorXd::Random(2);
      auto loss = [&](const PolicyParams& q) {
        const ForwardCache fc = forward_batch(q, X);
        return (a.array() * fc.mean.array()).sum() + (b.array() * fc.value.array()).sum() +
               c.dot(q.log_std());
      };
      const Eigen::VectorXd g = backward(p, forward_batch(p, X), a, b, c);
      std::uniform_int_distribution<std::size_t> pick(0, p.size() - 1);
      double worst = 0.0;
      for (int k = 0; k < 100; ++k) {
        const auto i = static_cast<Eigen::Index>(pick(rng));
        PolicyParams plus = p, minus = p;
        plus.data()(i) += 1e-5;
        minus.data()(i) -= 1e-5;
        const double fd = (loss(plus) - loss(minus)) / 2e-5;
        worst = std::max(worst, std::abs(fd - g(i)) / std::max({std::abs(fd), std::abs(g(i)), 1e-7}));
      }
      EXPECT_LE(worst, 1e-4) << "layers " << layers << " separate " << separate;
    }
  }
}

TEST(Checkpoint, RoundTripIsBitExact) {
  Checkpoint ck;
  ck.mode = "ip";
  ck.experiment = "ape";
  ck.step = 1234;
  NetworkShape s = shape_of(2, true);
  s.action_clip = 3.0;
  for (int i = 0; i < 2; ++i) ck.policies.push_back(random_params(s, 30 + i));
  ck.policies[0].data()(0) = 0.1 + 0.2;  // not exactly representable in short decimal
  const Checkpoint back = checkpoint_from_string(checkpoint_to_string(ck));
  ASSERT_EQ(back.policies.size(), 2u);
  EXPECT_EQ(back.mode, "ip");
  EXPECT_EQ(back.experiment, "ape");
  EXPECT_EQ(back.step, 1234);
  for (int i = 0; i < 2; ++i) {
    EXPECT_TRUE(back.policies[i] == ck.policies[i]);
    const auto x = random_obs(10, 77);
    const auto o1 = forward(ck.policies[i], x), o2 = forward(back.policies[i], x);
    EXPECT_EQ(o1.mean, o2.mean);
    EXPECT_EQ(o1.value, o2.value);
  }
  const auto dir = std::filesystem::path(MARL_TEST_TMP) / "neural";
  std::filesystem::create_directories(dir);
  save_checkpoint(dir / "ck.json", ck);
  EXPECT_TRUE(load_checkpoint(dir / "ck.json").policies[1] == ck.policies[1]);
}

TEST(Checkpoint, CommonPolicyServesEveryAgent) {
  Checkpoint ck;
  ck.policies.push_back(random_params(shape_of(2), 40));
  EXPECT_EQ(&ck.policy_for(0), &ck.policy_for(3));
  ck.mode = "ip";
  ck.policies.push_back(random_params(shape_of(2), 41));
  EXPECT_EQ(&ck.policy_for(1), &ck.policies[1]);
  EXPECT_THROW(ck.policy_for(3), std::out_of_range);
}

TEST(Checkpoint, RejectsBadDocuments) {
  EXPECT_ANY_THROW(checkpoint_from_string("{}"));
  EXPECT_ANY_THROW(checkpoint_from_string("not json"));
  Checkpoint ck;
  ck.policies.push_back(PolicyParams(shape_of(2)));
  std::string text = checkpoint_to_string(ck);
  const auto pos = text.find("\"version\":1");
  ASSERT_NE(pos, std::string::npos);
  text.replace(pos, 11, "\"version\":9");
  EXPECT_ANY_THROW(checkpoint_from_string(text));
}
