#include "marl/neural.hpp"

#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace marl {

namespace {

constexpr double kLog2Pi = 1.8378770664093454835606594728112;  // ln(2*pi)

void apply_activation(Activation a, Eigen::MatrixXd& z) {
  switch (a) {
    case Activation::Tanh: z = z.array().tanh(); break;
    case Activation::Relu: z = z.array().max(0.0); break;
  }
}

// Multiplies the upstream gradient by the activation derivative, expressed
// through the activation output.
void activation_backward(Activation a, const Eigen::MatrixXd& out, Eigen::MatrixXd& grad) {
  switch (a) {
    case Activation::Tanh: grad.array() *= 1.0 - out.array().square(); break;
    case Activation::Relu: grad.array() *= (out.array() > 0.0).cast<double>(); break;
  }
}

Eigen::MatrixXd orthogonal(int rows, int cols, double gain, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  const int big = std::max(rows, cols);
  const int small = std::min(rows, cols);
  Eigen::MatrixXd a(big, small);
  for (int j = 0; j < small; ++j)
    for (int i = 0; i < big; ++i) a(i, j) = normal(rng);
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(a);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topLeftCorner(small, small);
  for (int j = 0; j < small; ++j) {
    if (r(j, j) < 0) q.col(j) *= -1.0;
  }
  Eigen::MatrixXd w = rows >= cols ? q : Eigen::MatrixXd(q.transpose());
  return gain * w;
}

}  // namespace

std::string_view to_string(Activation a) {
  return a == Activation::Tanh ? "tanh" : "relu";
}

Activation parse_activation(std::string_view name) {
  if (name == "tanh") return Activation::Tanh;
  if (name == "relu") return Activation::Relu;
  throw std::invalid_argument("unknown activation '" + std::string(name) + "'");
}

PolicyParams::PolicyParams(const NetworkShape& shape) : shape_(shape) {
  if (shape.input_dim <= 0 || shape.hidden_layers < 0 || shape.hidden_units <= 0 ||
      shape.action_dim <= 0) {
    throw std::invalid_argument("network shape: dimensions must be positive");
  }
  if (!(shape.action_clip > 0.0)) throw std::invalid_argument("network shape: action_clip must be > 0");
  std::size_t offset = 0;
  int in = shape.input_dim;
  auto add = [&](int rows, int cols) {
    Block b{offset, offset + static_cast<std::size_t>(rows) * cols, rows, cols};
    offset = b.b_offset + rows;
    blocks_.push_back(b);
  };
  for (int l = 0; l < shape.hidden_layers; ++l) {
    add(shape.hidden_units, in);
    in = shape.hidden_units;
  }
  add(shape.action_dim, in);
  add(1, in);
  if (shape.separate_value) {
    in = shape.input_dim;
    for (int l = 0; l < shape.hidden_layers; ++l) {
      add(shape.hidden_units, in);
      in = shape.hidden_units;
    }
  }
  log_std_offset_ = offset;
  data_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(offset + shape.action_dim));
}

PolicyParams PolicyParams::initialized(const NetworkShape& shape, Rng& rng) {
  PolicyParams p(shape);
  for (int l = 0; l < p.num_linear(); ++l) {
    double gain = std::sqrt(2.0);
    if (l == p.mean_head()) gain = 0.01;
    if (l == p.value_head()) gain = 1.0;
    const Block& b = p.blocks_[l];
    p.weight(l) = orthogonal(b.rows, b.cols, gain, rng);
  }
  return p;
}

PolicyParams::MatMap PolicyParams::weight(int layer) {
  const Block& b = blocks_.at(layer);
  return MatMap(data_.data() + b.w_offset, b.rows, b.cols);
}
PolicyParams::ConstMatMap PolicyParams::weight(int layer) const {
  const Block& b = blocks_.at(layer);
  return ConstMatMap(data_.data() + b.w_offset, b.rows, b.cols);
}
PolicyParams::VecMap PolicyParams::bias(int layer) {
  const Block& b = blocks_.at(layer);
  return VecMap(data_.data() + b.b_offset, b.rows);
}
PolicyParams::ConstVecMap PolicyParams::bias(int layer) const {
  const Block& b = blocks_.at(layer);
  return ConstVecMap(data_.data() + b.b_offset, b.rows);
}
PolicyParams::VecMap PolicyParams::log_std() {
  return VecMap(data_.data() + log_std_offset_, shape_.action_dim);
}
PolicyParams::ConstVecMap PolicyParams::log_std() const {
  return ConstVecMap(data_.data() + log_std_offset_, shape_.action_dim);
}

Eigen::VectorXd PolicyParams::effective_log_std() const {
  return log_std().array().max(kLogStdMin).min(kLogStdMax);
}

void PolicyParams::clamp_log_std() {
  auto ls = log_std();
  ls = ls.array().max(kLogStdMin).min(kLogStdMax);
}

ForwardCache forward_batch(const PolicyParams& params, const Eigen::MatrixXd& inputs) {
  const NetworkShape& s = params.shape();
  if (inputs.rows() != s.input_dim) {
    throw std::invalid_argument("forward: expected input dimension " + std::to_string(s.input_dim) +
                                ", got " + std::to_string(inputs.rows()));
  }
  ForwardCache cache;
  cache.input = inputs;
  cache.hidden.reserve(s.hidden_layers);
  const Eigen::MatrixXd* x = &cache.input;
  for (int l = 0; l < s.hidden_layers; ++l) {
    Eigen::MatrixXd z = params.weight(l) * (*x);
    z.colwise() += params.bias(l);
    apply_activation(s.activation, z);
    cache.hidden.push_back(std::move(z));
    x = &cache.hidden.back();
  }
  cache.mean = params.weight(params.mean_head()) * (*x);
  cache.mean.colwise() += params.bias(params.mean_head());
  if (s.separate_value) {
    x = &cache.input;
    for (int l = 0; l < s.hidden_layers; ++l) {
      Eigen::MatrixXd z = params.weight(params.value_hidden(l)) * (*x);
      z.colwise() += params.bias(params.value_hidden(l));
      apply_activation(s.activation, z);
      cache.value_hidden.push_back(std::move(z));
      x = &cache.value_hidden.back();
    }
  }
  cache.value = params.weight(params.value_head()) * (*x);
  cache.value.array() += params.bias(params.value_head())(0);
  return cache;
}

PolicyOutput forward(const PolicyParams& params, std::span<const double> observation) {
  const NetworkShape& s = params.shape();
  if (static_cast<int>(observation.size()) != s.input_dim) {
    throw std::invalid_argument("forward: expected input dimension " + std::to_string(s.input_dim) +
                                ", got " + std::to_string(observation.size()));
  }
  const Eigen::VectorXd input = Eigen::Map<const Eigen::VectorXd>(observation.data(), s.input_dim);
  Eigen::VectorXd h = input;
  for (int l = 0; l < s.hidden_layers; ++l) {
    Eigen::MatrixXd z = params.weight(l) * h + params.bias(l);
    apply_activation(s.activation, z);
    h = z;
  }
  PolicyOutput out;
  out.mean = params.weight(params.mean_head()) * h + params.bias(params.mean_head());
  if (s.separate_value) {
    h = input;
    for (int l = 0; l < s.hidden_layers; ++l) {
      Eigen::MatrixXd z = params.weight(params.value_hidden(l)) * h + params.bias(params.value_hidden(l));
      apply_activation(s.activation, z);
      h = z;
    }
  }
  out.value = params.weight(params.value_head()).row(0).dot(h) + params.bias(params.value_head())(0);
  return out;
}

Eigen::VectorXd backward(const PolicyParams& params, const ForwardCache& cache,
                         const Eigen::MatrixXd& d_mean, const Eigen::RowVectorXd& d_value,
                         const Eigen::VectorXd& d_log_std) {
  const NetworkShape& s = params.shape();
  PolicyParams grad(s);
  const Eigen::MatrixXd& last = s.hidden_layers > 0 ? cache.hidden.back() : cache.input;
  const Eigen::MatrixXd& last_v =
      s.separate_value && s.hidden_layers > 0 ? cache.value_hidden.back() : last;

  const int mh = params.mean_head();
  const int vh = params.value_head();
  grad.weight(mh).noalias() = d_mean * last.transpose();
  grad.bias(mh) = d_mean.rowwise().sum();
  grad.weight(vh).noalias() = d_value * last_v.transpose();
  grad.bias(vh)(0) = d_value.sum();

  if (s.separate_value && s.hidden_layers > 0) {
    Eigen::MatrixXd dv = params.weight(vh).transpose() * d_value;
    for (int l = s.hidden_layers - 1; l >= 0; --l) {
      const int k = params.value_hidden(l);
      activation_backward(s.activation, cache.value_hidden[l], dv);
      const Eigen::MatrixXd& in = l > 0 ? cache.value_hidden[l - 1] : cache.input;
      grad.weight(k).noalias() = dv * in.transpose();
      grad.bias(k) = dv.rowwise().sum();
      if (l > 0) dv = params.weight(k).transpose() * dv;
    }
  }

  if (s.hidden_layers > 0) {
    Eigen::MatrixXd dh = params.weight(mh).transpose() * d_mean;
    if (!s.separate_value) dh.noalias() += params.weight(vh).transpose() * d_value;
    for (int l = s.hidden_layers - 1; l >= 0; --l) {
      activation_backward(s.activation, cache.hidden[l], dh);
      const Eigen::MatrixXd& in = l > 0 ? cache.hidden[l - 1] : cache.input;
      grad.weight(l).noalias() = dh * in.transpose();
      grad.bias(l) = dh.rowwise().sum();
      if (l > 0) dh = params.weight(l).transpose() * dh;
    }
  }

  // The clamp on log_std passes gradient only inside its range.
  auto ls = params.log_std();
  auto gls = grad.log_std();
  for (int k = 0; k < s.action_dim; ++k) {
    gls(k) = (ls(k) >= kLogStdMin && ls(k) <= kLogStdMax) ? d_log_std(k) : 0.0;
  }
  return std::move(grad.data());
}

double gaussian_log_prob(const Eigen::VectorXd& x, const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& log_std) {
  double lp = 0.0;
  for (Eigen::Index k = 0; k < x.size(); ++k) {
    const double z = (x(k) - mean(k)) * std::exp(-log_std(k));
    lp += -0.5 * z * z - log_std(k) - 0.5 * kLog2Pi;
  }
  return lp;
}

double gaussian_entropy(const Eigen::VectorXd& log_std) {
  return log_std.size() * 0.5 * (kLog2Pi + 1.0) + log_std.sum();
}

Action action_from_raw(const Eigen::VectorXd& raw, double clip) {
  const double a0 = std::clamp(raw(0), -clip, clip) / clip;
  const double a1 = std::clamp(raw(1), -clip, clip) / clip;
  return Action(Action::kMaxLinear * 0.5 * (a0 + 1.0), Action::kMaxAngular * a1);
}

DistributionSample sample_action(const PolicyParams& params, std::span<const double> observation,
                                 Rng& rng) {
  const PolicyOutput out = forward(params, observation);
  const Eigen::VectorXd log_std = params.effective_log_std();
  std::normal_distribution<double> normal(0.0, 1.0);
  DistributionSample s;
  s.action_raw.resize(out.mean.size());
  for (Eigen::Index k = 0; k < out.mean.size(); ++k) {
    s.action_raw(k) = out.mean(k) + std::exp(log_std(k)) * normal(rng);
  }
  s.action = action_from_raw(s.action_raw, params.shape().action_clip);
  s.log_prob = gaussian_log_prob(s.action_raw, out.mean, log_std);
  s.entropy = gaussian_entropy(log_std);
  s.value = out.value;
  return s;
}

DistributionSample mean_action(const PolicyParams& params, std::span<const double> observation) {
  const PolicyOutput out = forward(params, observation);
  const Eigen::VectorXd log_std = params.effective_log_std();
  DistributionSample s;
  s.action_raw = out.mean;
  s.action = action_from_raw(s.action_raw, params.shape().action_clip);
  s.log_prob = gaussian_log_prob(s.action_raw, out.mean, log_std);
  s.entropy = gaussian_entropy(log_std);
  s.value = out.value;
  return s;
}

// --- checkpoints -----------------------------------------------------------

using nlohmann::json;

const PolicyParams& Checkpoint::policy_for(std::size_t agent_id) const {
  if (policies.empty()) throw std::logic_error("checkpoint holds no policies");
  if (policies.size() == 1) return policies.front();
  return policies.at(agent_id);
}

std::string checkpoint_to_string(const Checkpoint& ckpt) {
  json policies = json::array();
  for (const PolicyParams& p : ckpt.policies) {
    const NetworkShape& s = p.shape();
    json shape = {{"input_dim", s.input_dim},
                  {"hidden_layers", s.hidden_layers},
                  {"hidden_units", s.hidden_units},
                  {"action_dim", s.action_dim},
                  {"activation", std::string(to_string(s.activation))},
                  {"action_clip", s.action_clip},
                  {"separate_value", s.separate_value}};
    std::vector<double> values(p.data().data(), p.data().data() + p.data().size());
    policies.push_back({{"shape", shape}, {"params", values}});
  }
  json doc = {{"format", "marl.checkpoint"},
              {"version", kCheckpointVersion},
              {"mode", ckpt.mode},
              {"experiment", ckpt.experiment},
              {"n_agents", ckpt.n_agents},
              {"observation_scale", ckpt.observation_scale},
              {"step", ckpt.step},
              {"policies", policies}};
  return doc.dump();
}

Checkpoint checkpoint_from_string(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw std::runtime_error(std::string("checkpoint: malformed JSON: ") + e.what());
  }
  try {
    if (doc.value("format", "") != "marl.checkpoint") {
      throw std::runtime_error("checkpoint: not a marl.checkpoint document");
    }
    if (doc.at("version").get<int>() != kCheckpointVersion) {
      throw std::runtime_error("checkpoint: unsupported version " +
                               std::to_string(doc.at("version").get<int>()));
    }
    Checkpoint ckpt;
    ckpt.mode = doc.at("mode").get<std::string>();
    ckpt.experiment = doc.at("experiment").get<std::string>();
    ckpt.n_agents = doc.at("n_agents").get<std::size_t>();
    ckpt.observation_scale = doc.at("observation_scale").get<double>();
    ckpt.step = doc.at("step").get<std::int64_t>();
    for (const json& pj : doc.at("policies")) {
      const json& sj = pj.at("shape");
      NetworkShape shape;
      shape.input_dim = sj.at("input_dim").get<int>();
      shape.hidden_layers = sj.at("hidden_layers").get<int>();
      shape.hidden_units = sj.at("hidden_units").get<int>();
      shape.action_dim = sj.at("action_dim").get<int>();
      shape.activation = parse_activation(sj.at("activation").get<std::string>());
      shape.action_clip = sj.value("action_clip", 1.0);
      shape.separate_value = sj.value("separate_value", false);
      PolicyParams p(shape);
      const auto values = pj.at("params").get<std::vector<double>>();
      if (values.size() != p.size()) {
        throw std::runtime_error("checkpoint: parameter count does not match layer shapes");
      }
      p.data() = Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
      ckpt.policies.push_back(std::move(p));
    }
    if (ckpt.policies.empty()) throw std::runtime_error("checkpoint: no policies");
    return ckpt;
  } catch (const json::exception& e) {
    throw std::runtime_error(std::string("checkpoint: invalid document: ") + e.what());
  }
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    if (!out) throw std::runtime_error("checkpoint: cannot write " + tmp.string());
    out << checkpoint_to_string(ckpt) << '\n';
    if (!out) throw std::runtime_error("checkpoint: write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("checkpoint: cannot open " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return checkpoint_from_string(ss.str());
}

}  // namespace marl
