#include "stretchcap/regress.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <random>
#include <stdexcept>

#include <json.hpp>

namespace stretchcap {

namespace {

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;
constexpr char kModelMagic[8] = {'S', 'C', 'A', 'P', 'M', 'D', 'L', '1'};

}  // namespace

Dataset Dataset::rows(const std::vector<int>& indices) const {
  Dataset out;
  out.input_names = input_names;
  out.inputs.resize(static_cast<Eigen::Index>(indices.size()), inputs.cols());
  out.targets.resize(static_cast<Eigen::Index>(indices.size()), targets.cols());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(indices[i]);
    out.targets.row(static_cast<Eigen::Index>(i)) = targets.row(indices[i]);
    out.frames.push_back(frames[static_cast<std::size_t>(indices[i])]);
  }
  return out;
}

Dataset build_dataset(const LabeledSession& labeled, const FrameTable& capacitance) {
  if (capacitance.values.rows() != labeled.frames)
    throw std::invalid_argument("capacitance trace has " + std::to_string(capacitance.values.rows()) +
                                " frames, labeled session has " + std::to_string(labeled.frames));
  std::vector<char> discarded(static_cast<std::size_t>(labeled.frames), 0);
  for (int t : labeled.discarded_frames) discarded[static_cast<std::size_t>(t)] = 1;
  std::vector<int> keep;
  for (int t = 0; t < labeled.frames; ++t) {
    if (discarded[static_cast<std::size_t>(t)]) continue;
    if (!capacitance.values.row(t).allFinite()) continue;
    keep.push_back(t);
  }
  Dataset out;
  out.input_names = capacitance.columns;
  out.inputs.resize(static_cast<Eigen::Index>(keep.size()), capacitance.values.cols());
  out.targets.resize(static_cast<Eigen::Index>(keep.size()), labeled.positions.cols());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    out.inputs.row(static_cast<Eigen::Index>(i)) = capacitance.values.row(keep[i]);
    out.targets.row(static_cast<Eigen::Index>(i)) = labeled.positions.row(keep[i]);
    out.frames.push_back(keep[i]);
  }
  return out;
}

std::pair<Dataset, Dataset> split_chronological(const Dataset& data, double validation_fraction) {
  if (validation_fraction < 0.0 || validation_fraction >= 1.0)
    throw std::invalid_argument("validation fraction must be in [0, 1)");
  const int n = data.size();
  const int n_val = static_cast<int>(std::floor(n * validation_fraction));
  std::vector<int> tr(static_cast<std::size_t>(n - n_val)), va(static_cast<std::size_t>(n_val));
  std::iota(tr.begin(), tr.end(), 0);
  std::iota(va.begin(), va.end(), n - n_val);
  return {data.rows(tr), data.rows(va)};
}

InputNormalization InputNormalization::fit(const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) throw std::invalid_argument("cannot normalize an empty input set");
  InputNormalization n;
  n.mean = inputs.colwise().mean().transpose();
  n.variance = (inputs.rowwise() - n.mean.transpose()).array().square().colwise().mean().transpose();
  for (Eigen::Index c = 0; c < n.variance.size(); ++c) {
    if (n.variance[c] < 1e-12) {
      n.dead_channels.push_back(static_cast<int>(c));
      n.variance[c] = 1e-12;
    }
  }
  return n;
}

Eigen::MatrixXd InputNormalization::apply(const Eigen::MatrixXd& inputs) const {
  if (inputs.cols() != mean.size())
    throw std::invalid_argument("expected " + std::to_string(mean.size()) + " input channels, got " +
                                std::to_string(inputs.cols()));
  if (!inputs.allFinite()) throw std::domain_error("inputs contain non-finite values");
  const Eigen::RowVectorXd inv_std = variance.array().rsqrt().matrix().transpose();
  return (inputs.rowwise() - mean.transpose()).array().rowwise() * inv_std.array();
}

Mlp::Mlp(std::vector<int> dims, std::uint64_t seed) : dims_(std::move(dims)) {
  if (dims_.size() < 2) throw std::invalid_argument("network needs input and output sizes");
  for (int d : dims_)
    if (d < 1) throw std::invalid_argument("layer sizes must be positive");
  Eigen::Index n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    Offsets o{};
    o.w = n;
    n += static_cast<Eigen::Index>(dims_[static_cast<std::size_t>(l + 1)]) * dims_[static_cast<std::size_t>(l)];
    o.b = n;
    n += dims_[static_cast<std::size_t>(l + 1)];
    o.gamma = o.beta = -1;
    if (l + 1 < num_layers()) {
      o.gamma = n;
      n += dims_[static_cast<std::size_t>(l + 1)];
      o.beta = n;
      n += dims_[static_cast<std::size_t>(l + 1)];
    }
    offsets_.push_back(o);
  }
  theta_.resize(n);
  std::mt19937_64 rng(seed);
  for (int l = 0; l < num_layers(); ++l) {
    const double k = 1.0 / std::sqrt(static_cast<double>(dims_[static_cast<std::size_t>(l)]));
    std::uniform_real_distribution<double> u(-k, k);
    auto w = weight(l);
    for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = u(rng);
    auto b = bias(l);
    for (Eigen::Index i = 0; i < b.size(); ++i) b[i] = u(rng);
    const auto& o = offsets_[static_cast<std::size_t>(l)];
    if (o.gamma >= 0) {
      const int h = dims_[static_cast<std::size_t>(l + 1)];
      theta_.segment(o.gamma, h).setOnes();
      theta_.segment(o.beta, h).setZero();
      running_mean.push_back(Eigen::VectorXd::Zero(h));
      running_var.push_back(Eigen::VectorXd::Ones(h));
    }
  }
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(int l) {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)].w, dims_[static_cast<std::size_t>(l + 1)],
          dims_[static_cast<std::size_t>(l)]};
}
Eigen::Map<Eigen::VectorXd> Mlp::bias(int l) {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)].b, dims_[static_cast<std::size_t>(l + 1)]};
}
Eigen::Map<const Eigen::MatrixXd> Mlp::weight(int l) const {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)].w, dims_[static_cast<std::size_t>(l + 1)],
          dims_[static_cast<std::size_t>(l)]};
}
Eigen::Map<const Eigen::VectorXd> Mlp::bias(int l) const {
  return {theta_.data() + offsets_[static_cast<std::size_t>(l)].b, dims_[static_cast<std::size_t>(l + 1)]};
}

Eigen::MatrixXd Mlp::forward(const Eigen::MatrixXd& x) const {
  if (x.cols() != num_inputs())
    throw std::invalid_argument("expected " + std::to_string(num_inputs()) + " inputs, got " +
                                std::to_string(x.cols()));
  if (!x.allFinite()) throw std::domain_error("network input contains non-finite values");
  Eigen::MatrixXd z = x;
  for (int l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd h = z * weight(l).transpose();
    h.rowwise() += bias(l).transpose();
    if (l + 1 == num_layers()) return h;
    const auto& o = offsets_[static_cast<std::size_t>(l)];
    const Eigen::Index n = h.cols();
    const Eigen::ArrayXd scale =
        theta_.segment(o.gamma, n).array() * (running_var[static_cast<std::size_t>(l)].array() + kBnEps).rsqrt();
    const Eigen::ArrayXd shift =
        theta_.segment(o.beta, n).array() - running_mean[static_cast<std::size_t>(l)].array() * scale;
    z = (h.array().max(0.0).rowwise() * scale.transpose()).rowwise() + shift.transpose();
  }
  return z;
}

double Mlp::loss(const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, double lambda, Eigen::VectorXd* grad,
                 bool update_running) {
  const Eigen::Index batch = x.rows();
  if (batch < 2) throw std::invalid_argument("training batches need at least two samples");
  if (x.cols() != num_inputs() || y.cols() != num_outputs() || y.rows() != batch)
    throw std::invalid_argument("batch dimensions do not match the network");
  const int layers = num_layers();
  std::vector<Eigen::MatrixXd> z(static_cast<std::size_t>(layers)), h(static_cast<std::size_t>(layers)),
      xhat(static_cast<std::size_t>(layers));
  std::vector<Eigen::ArrayXd> inv_std(static_cast<std::size_t>(layers));
  z[0] = x;
  Eigen::MatrixXd out;
  for (int l = 0; l < layers; ++l) {
    const auto L = static_cast<std::size_t>(l);
    Eigen::MatrixXd pre = z[L] * weight(l).transpose();
    pre.rowwise() += bias(l).transpose();
    if (l + 1 == layers) {
      out = std::move(pre);
      break;
    }
    const auto& o = offsets_[L];
    const Eigen::Index n = pre.cols();
    const Eigen::MatrixXd a = pre.cwiseMax(0.0);
    const Eigen::RowVectorXd mu = a.colwise().mean();
    Eigen::MatrixXd centered = a.rowwise() - mu;
    const Eigen::ArrayXd var = centered.array().square().colwise().mean().transpose();
    inv_std[L] = (var + kBnEps).rsqrt();
    xhat[L] = centered.array().rowwise() * inv_std[L].transpose();
    z[L + 1] = (xhat[L].array().rowwise() * theta_.segment(o.gamma, n).array().transpose()).rowwise() +
               theta_.segment(o.beta, n).array().transpose();
    h[L] = std::move(pre);
    if (update_running) {
      running_mean[L] = (1.0 - kBnMomentum) * running_mean[L] + kBnMomentum * mu.transpose();
      running_var[L] = (1.0 - kBnMomentum) * running_var[L] +
                       kBnMomentum * (var * (static_cast<double>(batch) / (batch - 1))).matrix();
    }
  }
  const Eigen::MatrixXd diff = out - y;
  const double value = diff.squaredNorm() / static_cast<double>(batch) + lambda * theta_.squaredNorm();
  if (!grad) return value;

  Eigen::VectorXd& g = *grad;
  g = 2.0 * lambda * theta_;
  Eigen::MatrixXd dz = 2.0 * diff / static_cast<double>(batch);
  for (int l = layers - 1; l >= 0; --l) {
    const auto L = static_cast<std::size_t>(l);
    const auto& o = offsets_[L];
    Eigen::MatrixXd dh;
    if (l + 1 == layers) {
      dh = std::move(dz);
    } else {
      const Eigen::Index n = h[L].cols();
      g.segment(o.gamma, n) += (dz.array() * xhat[L].array()).colwise().sum().matrix().transpose();
      g.segment(o.beta, n) += dz.colwise().sum().transpose();
      const Eigen::ArrayXXd dxhat = dz.array().rowwise() * theta_.segment(o.gamma, n).array().transpose();
      const Eigen::ArrayXd sum_dxhat = dxhat.colwise().sum().transpose();
      const Eigen::ArrayXd sum_dxhat_xhat = (dxhat * xhat[L].array()).colwise().sum().transpose();
      Eigen::ArrayXXd da = (dxhat * static_cast<double>(batch)).rowwise() - sum_dxhat.transpose();
      da -= xhat[L].array().rowwise() * sum_dxhat_xhat.transpose();
      da.rowwise() *= (inv_std[L] / static_cast<double>(batch)).transpose();
      dh = (da * (h[L].array() > 0.0).cast<double>()).matrix();
    }
    const Eigen::Index rows = dims_[L + 1], cols = dims_[L];
    Eigen::Map<Eigen::MatrixXd>(g.data() + o.w, rows, cols).noalias() += dh.transpose() * z[L];
    g.segment(o.b, rows) += dh.colwise().sum().transpose();
    if (l > 0) dz = dh * weight(l);
  }
  return value;
}

Eigen::MatrixXd Regressor::predict(const Eigen::MatrixXd& inputs) const {
  return net.forward(normalization.apply(inputs));
}

TrainResult train(const Dataset& data, const TrainOptions& options) {
  if (data.size() < 2) throw std::invalid_argument("training needs at least two frames");
  if (options.batch_size < 2) throw std::invalid_argument("batch size must be at least 2");
  auto [train_set, val_set] = split_chronological(data, options.validation_fraction);
  if (train_set.size() < 2) throw std::invalid_argument("training split has fewer than two frames");

  TrainResult result;
  Regressor& model = result.model;
  model.options = options;
  model.options.progress = nullptr;
  model.input_names = data.input_names;
  model.normalization = InputNormalization::fit(train_set.inputs);
  std::vector<int> dims{static_cast<int>(data.inputs.cols())};
  dims.insert(dims.end(), options.hidden.begin(), options.hidden.end());
  dims.push_back(static_cast<int>(data.targets.cols()));
  model.net = Mlp(dims, options.seed);
  model.net.bias(model.net.num_layers() - 1) = train_set.targets.colwise().mean().transpose();

  const Eigen::MatrixXd xt = model.normalization.apply(train_set.inputs);
  const Eigen::MatrixXd xv = val_set.size() > 0 ? model.normalization.apply(val_set.inputs) : xt;
  const Eigen::MatrixXd& yv = val_set.size() > 0 ? val_set.targets : train_set.targets;

  Eigen::VectorXd& theta = model.net.parameters();
  Eigen::VectorXd m = Eigen::VectorXd::Zero(theta.size()), v = Eigen::VectorXd::Zero(theta.size()), grad;
  const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::mt19937_64 rng(options.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> perm(static_cast<std::size_t>(train_set.size()));
  std::iota(perm.begin(), perm.end(), 0);

  Mlp best = model.net;
  double best_val = std::numeric_limits<double>::infinity();
  Eigen::MatrixXd xb, yb;
  for (int epoch = 0; epoch < options.epochs; ++epoch) {
    const Mlp before_epoch = model.net;
    std::shuffle(perm.begin(), perm.end(), rng);
    double sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < perm.size(); start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t end = std::min(perm.size(), start + static_cast<std::size_t>(options.batch_size));
      if (end - start < 2) continue;
      xb.resize(static_cast<Eigen::Index>(end - start), xt.cols());
      yb.resize(static_cast<Eigen::Index>(end - start), train_set.targets.cols());
      for (std::size_t i = start; i < end; ++i) {
        xb.row(static_cast<Eigen::Index>(i - start)) = xt.row(perm[i]);
        yb.row(static_cast<Eigen::Index>(i - start)) = train_set.targets.row(perm[i]);
      }
      const double value = model.net.loss(xb, yb, options.lambda, &grad, true);
      if (!std::isfinite(value) || !grad.allFinite()) {
        result.diverged = true;
        break;
      }
      ++step;
      m = beta1 * m + (1.0 - beta1) * grad;
      v = beta2 * v + (1.0 - beta2) * grad.cwiseAbs2();
      const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
      const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
      theta.array() -= options.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
      sum += value;
      ++batches;
    }
    if (result.diverged) {
      model.net = before_epoch;
      break;
    }
    const double train_loss = batches ? sum / batches : std::numeric_limits<double>::quiet_NaN();
    const double val_loss = (model.net.forward(xv) - yv).squaredNorm() / static_cast<double>(yv.rows());
    if (!std::isfinite(val_loss)) {
      result.diverged = true;
      model.net = before_epoch;
      break;
    }
    result.train_loss.push_back(train_loss);
    result.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      best = model.net;
      result.best_epoch = epoch;
    }
    if (options.progress) options.progress(epoch, train_loss, val_loss);
  }
  if (result.best_epoch >= 0) model.net = std::move(best);
  return result;
}

Eigen::MatrixXd LinearModel::predict(const Eigen::MatrixXd& inputs) const {
  return (normalization.apply(inputs) * weights).rowwise() + intercept;
}

LinearModel train_linear_baseline(const Dataset& data, double alpha) {
  if (data.size() < 1) throw std::invalid_argument("linear baseline needs data");
  if (!(alpha > 0.0)) throw std::invalid_argument("ridge alpha must be positive");
  LinearModel lm;
  lm.normalization = InputNormalization::fit(data.inputs);
  const Eigen::MatrixXd z = lm.normalization.apply(data.inputs);
  const Eigen::RowVectorXd zmean = z.colwise().mean();
  const Eigen::RowVectorXd ymean = data.targets.colwise().mean();
  const Eigen::MatrixXd zc = z.rowwise() - zmean;
  const Eigen::MatrixXd yc = data.targets.rowwise() - ymean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(zc, Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::VectorXd s = svd.singularValues();
  const Eigen::VectorXd shrink = s.array() / (s.array().square() + alpha);
  lm.weights = svd.matrixV() * shrink.asDiagonal() * (svd.matrixU().transpose() * yc);
  lm.intercept = ymean - zmean * lm.weights;
  return lm;
}

ErrorReport evaluate(const Eigen::MatrixXd& predicted, const Eigen::MatrixXd& truth) {
  if (predicted.rows() != truth.rows() || predicted.cols() != truth.cols() || truth.cols() % 3 != 0)
    throw std::invalid_argument("prediction and truth shapes differ");
  ErrorReport r;
  const Eigen::Index markers = truth.cols() / 3;
  r.per_marker_mean.assign(static_cast<std::size_t>(markers), 0.0);
  double sum = 0.0, sum2 = 0.0;
  for (Eigen::Index f = 0; f < truth.rows(); ++f) {
    double frame_max = 0.0;
    for (Eigen::Index m = 0; m < markers; ++m) {
      const double e = (predicted.block(f, 3 * m, 1, 3) - truth.block(f, 3 * m, 1, 3)).norm();
      sum += e;
      sum2 += e * e;
      frame_max = std::max(frame_max, e);
      r.per_marker_mean[static_cast<std::size_t>(m)] += e;
    }
    r.per_frame_max.push_back(frame_max);
    r.max = std::max(r.max, frame_max);
  }
  r.samples = static_cast<int>(truth.rows() * markers);
  if (r.samples > 0) {
    r.mean = sum / r.samples;
    r.stddev = std::sqrt(std::max(0.0, sum2 / r.samples - r.mean * r.mean));
    for (auto& v : r.per_marker_mean) v /= static_cast<double>(truth.rows());
  }
  return r;
}

FilterResult angle_filter(const Dataset& data, const std::function<double(const Eigen::RowVectorXd&)>& angle_fn,
                          double gamma, double beta, int min_frames) {
  std::vector<int> keep;
  for (int i = 0; i < data.size(); ++i) {
    const double a = angle_fn(data.targets.row(i));
    if (a < gamma || a > beta) keep.push_back(i);
  }
  FilterResult out;
  out.data = data.rows(keep);
  out.retained = static_cast<int>(keep.size());
  if (out.retained < min_frames)
    out.warning = "only " + std::to_string(out.retained) + " frames retained (minimum " + std::to_string(min_frames) + ")";
  return out;
}

double marker_line_angle(const Eigen::RowVectorXd& targets, int a0, int a1, int b0, int b1) {
  auto p = [&](int m) -> Eigen::Vector3d { return targets.segment(3 * m, 3).transpose(); };
  const Eigen::Vector3d a = p(a1) - p(a0), b = p(b1) - p(b0);
  const double c = a.dot(b) / (a.norm() * b.norm());
  return std::acos(std::clamp(c, -1.0, 1.0)) * 180.0 / M_PI;
}

void save_regressor(const std::filesystem::path& path, const Regressor& model) {
  nlohmann::ordered_json h;
  h["version"] = 1;
  h["dims"] = model.net.dims();
  h["layout_hash"] = hex64(model.layout_hash);
  h["input_names"] = model.input_names;
  h["dead_channels"] = model.normalization.dead_channels;
  h["hyperparameters"] = {{"hidden", model.options.hidden},
                          {"learning_rate", model.options.learning_rate},
                          {"batch_size", model.options.batch_size},
                          {"lambda", model.options.lambda},
                          {"epochs", model.options.epochs},
                          {"validation_fraction", model.options.validation_fraction},
                          {"seed", model.options.seed}};
  h["parameter_count"] = model.net.parameters().size();
  const std::string header = h.dump();

  std::vector<double> payload(model.net.parameters().data(),
                              model.net.parameters().data() + model.net.parameters().size());
  for (const auto& v : model.net.running_mean) payload.insert(payload.end(), v.data(), v.data() + v.size());
  for (const auto& v : model.net.running_var) payload.insert(payload.end(), v.data(), v.data() + v.size());
  const auto& n = model.normalization;
  payload.insert(payload.end(), n.mean.data(), n.mean.data() + n.mean.size());
  payload.insert(payload.end(), n.variance.data(), n.variance.data() + n.variance.size());

  std::vector<char> bytes(kModelMagic, kModelMagic + 8);
  const std::uint64_t len = header.size();
  const auto* lp = reinterpret_cast<const char*>(&len);
  bytes.insert(bytes.end(), lp, lp + sizeof(len));
  bytes.insert(bytes.end(), header.begin(), header.end());
  const auto* dp = reinterpret_cast<const char*>(payload.data());
  bytes.insert(bytes.end(), dp, dp + payload.size() * sizeof(double));
  write_binary_file_atomic(path, bytes);
}

Regressor load_regressor(const std::filesystem::path& path) {
  const std::string bytes = read_text_file(path);
  if (bytes.size() < 16 || std::memcmp(bytes.data(), kModelMagic, 8) != 0)
    throw FormatError(path.string(), 0, "not a model file");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (16 + len > bytes.size()) throw FormatError(path.string(), 0, "truncated model header");
  nlohmann::json h;
  try {
    h = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string(), 0, e.what());
  }
  if (h.value("version", 0) != 1) throw FormatError(path.string(), 0, "unsupported model version");
  Regressor model;
  const auto dims = h.at("dims").get<std::vector<int>>();
  model.net = Mlp(dims, 0);
  model.layout_hash = std::stoull(h.at("layout_hash").get<std::string>(), nullptr, 16);
  model.input_names = h.at("input_names").get<std::vector<std::string>>();
  model.normalization.dead_channels = h.at("dead_channels").get<std::vector<int>>();
  const auto& hp = h.at("hyperparameters");
  model.options.hidden = hp.at("hidden").get<std::vector<int>>();
  model.options.learning_rate = hp.at("learning_rate").get<double>();
  model.options.batch_size = hp.at("batch_size").get<int>();
  model.options.lambda = hp.at("lambda").get<double>();
  model.options.epochs = hp.at("epochs").get<int>();
  model.options.validation_fraction = hp.at("validation_fraction").get<double>();
  model.options.seed = hp.at("seed").get<std::uint64_t>();

  std::size_t expected = static_cast<std::size_t>(model.net.parameters().size());
  for (const auto& v : model.net.running_mean) expected += 2 * static_cast<std::size_t>(v.size());
  expected += 2 * static_cast<std::size_t>(dims.front());
  if (bytes.size() != 16 + len + expected * sizeof(double))
    throw FormatError(path.string(), 0, "model payload size does not match its header");
  const char* p = bytes.data() + 16 + len;
  auto read_into = [&](double* dst, Eigen::Index n) {
    std::memcpy(dst, p, static_cast<std::size_t>(n) * sizeof(double));
    p += static_cast<std::size_t>(n) * sizeof(double);
  };
  read_into(model.net.parameters().data(), model.net.parameters().size());
  for (auto& v : model.net.running_mean) read_into(v.data(), v.size());
  for (auto& v : model.net.running_var) read_into(v.data(), v.size());
  model.normalization.mean.resize(dims.front());
  model.normalization.variance.resize(dims.front());
  read_into(model.normalization.mean.data(), dims.front());
  read_into(model.normalization.variance.data(), dims.front());
  return model;
}

}  // namespace stretchcap
