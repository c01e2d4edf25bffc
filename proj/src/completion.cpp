#include "depthint/completion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "depthint/error.hpp"
#include "depthint/losses.hpp"
#include "depthint/random.hpp"

namespace depthint {

using ad::Tensor;

int CompletionConfig::bottleneck_channels() const {
  const int b = bottleneck_extent();
  return b > 0 ? fc2 / (b * b * b) : 0;
}

void CompletionConfig::validate() const {
  auto fail = [](const std::string& msg) { throw DomainError("completion config: " + msg); };
  if (resolution < 1) fail("resolution must be positive");
  if (channels.empty()) fail("at least one encoder stage is required");
  for (int c : channels) {
    if (c < 1) fail("channel widths must be positive");
  }
  if (resolution % (1 << stages()) != 0) {
    fail("resolution " + std::to_string(resolution) + " is not divisible by 2^" + std::to_string(stages()));
  }
  if (fc1 < 1 || fc2 < 1) fail("bottleneck widths must be positive");
  const int b = bottleneck_extent();
  if (fc2 % (b * b * b) != 0) {
    fail("fc2 = " + std::to_string(fc2) + " does not reshape onto a " + std::to_string(b) + "^3 grid");
  }
  if (keypoints < 1 || keypoints > resolution * resolution * resolution) {
    fail("keypoint count must lie in [1, r^3]");
  }
  if (fold_u < 1 || fold_hidden < 1) fail("folding sizes must be positive");
  if (kernel < 1 || kernel % 2 == 0) fail("kernel size must be odd");
}

namespace {

std::vector<double> uniform_values(std::size_t n, double bound, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-bound, bound);
  return v;
}

}  // namespace

CompletionModel::CompletionModel(const CompletionConfig& config, std::uint64_t seed)
    : config_(config), basis_((config.validate(), config.resolution)) {
  Rng rng(seed);
  const int k = config.kernel;
  // He-uniform weights, zero biases.
  auto add = [&](const std::string& name, ad::Shape shape, int fan_in, bool zero = false) {
    const std::size_t n = ad::element_count(shape);
    std::vector<double> values = zero ? std::vector<double>(n, 0.0) : uniform_values(n, std::sqrt(6.0 / fan_in), rng);
    params_.emplace_back(name, std::move(shape), std::move(values));
  };
  auto bias = [&](const std::string& name, int n) { params_.emplace_back(name, ad::Shape{n}, std::vector<double>(std::size_t(n), 0.0)); };

  int in = 4;
  for (int s = 0; s < config.stages(); ++s) {
    const int out = config.channels[std::size_t(s)];
    add("enc" + std::to_string(s) + ".weight", {out, in, k, k, k}, in * k * k * k);
    bias("enc" + std::to_string(s) + ".bias", out);
    in = out;
  }
  const int b = config.bottleneck_extent();
  const int flat = in * b * b * b;
  add("fc1.weight", {flat, config.fc1}, flat);
  bias("fc1.bias", config.fc1);
  add("fc2.weight", {config.fc1, config.fc2}, config.fc1);
  bias("fc2.bias", config.fc2);
  in = config.bottleneck_channels();
  for (int s = 0; s < config.stages(); ++s) {
    const int out = config.channels[std::size_t(config.stages() - 1 - s)];
    add("dec" + std::to_string(s) + ".weight", {in, out, 2, 2, 2}, in);
    bias("dec" + std::to_string(s) + ".bias", out);
    in = out;
  }
  const int c = config.feature_channels();
  add("delta.weight", {3, c, 1, 1, 1}, c, true);
  bias("delta.bias", 3);
  add("conf.weight", {1, c, 1, 1, 1}, c);
  // Confidence starts near one basis cell, the scale of the distances it regresses.
  params_.emplace_back("conf.bias", ad::Shape{1}, std::vector<double>{std::log(std::expm1(basis_.spacing()))});
  add("fold1.weight", {2 + c, config.fold_hidden}, 2 + c);
  bias("fold1.bias", config.fold_hidden);
  add("fold2.weight", {config.fold_hidden, 3}, config.fold_hidden, true);
  bias("fold2.bias", 3);
}

ad::Parameter& CompletionModel::parameter(const std::string& name) {
  for (auto& p : params_) {
    if (p.name == name) return p;
  }
  throw DomainError("completion model has no parameter '" + name + "'");
}

const Tensor& CompletionModel::tensor(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p.tensor;
  }
  throw DomainError("completion model has no parameter '" + name + "'");
}

std::size_t CompletionModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.tensor.size();
  return n;
}

Tensor encoding_tensor(const BpsEncoding& encoding) {
  const int r = encoding.resolution;
  const std::size_t cells = std::size_t(r) * r * r;
  if (std::size_t(encoding.deltas.cols()) != cells || std::size_t(encoding.distances.size()) != cells) {
    throw DomainError("encoding_tensor: encoding does not hold r^3 cells");
  }
  std::vector<double> v(4 * cells);
  for (std::size_t j = 0; j < cells; ++j) {
    for (int c = 0; c < 3; ++c) v[std::size_t(c) * cells + j] = encoding.deltas(c, Eigen::Index(j));
    v[3 * cells + j] = encoding.distances[Eigen::Index(j)];
  }
  return Tensor::constant({4, r, r, r}, std::move(v));
}

Tensor to_tensor(const PointCloud& cloud) {
  return Tensor::constant({int(cloud.cols()), 3}, std::vector<double>(cloud.data(), cloud.data() + cloud.size()));
}

PointCloud to_cloud(const Tensor& points) {
  if (points.rank() != 2 || points.dim(1) != 3) throw DomainError("to_cloud: expected [n, 3], got " + ad::to_string(points.shape()));
  return Eigen::Map<const PointCloud>(points.values().data(), 3, points.dim(0));
}

std::vector<int> select_keypoints(const Eigen::VectorXd& confidence, int m) {
  const int cells = int(confidence.size());
  if (m < 1 || m > cells) {
    throw DomainError("select_keypoints: m = " + std::to_string(m) + " outside [1, " + std::to_string(cells) + "]");
  }
  std::vector<int> idx(static_cast<std::size_t>(cells));
  std::iota(idx.begin(), idx.end(), 0);
  auto less = [&](int a, int b) { return confidence[a] < confidence[b] || (confidence[a] == confidence[b] && a < b); };
  std::partial_sort(idx.begin(), idx.begin() + m, idx.end(), less);
  idx.resize(std::size_t(m));
  return idx;
}

PointCloud keypoint_positions(const PointCloud& deltas, const BasisPointSet& basis, const std::vector<int>& cells) {
  PointCloud out(3, Eigen::Index(cells.size()));
  for (std::size_t i = 0; i < cells.size(); ++i) out.col(Eigen::Index(i)) = basis.points().col(cells[i]) + deltas.col(cells[i]);
  return out;
}

Eigen::Matrix<double, Eigen::Dynamic, 2> fold_lattice(int u, double g) {
  Eigen::Matrix<double, Eigen::Dynamic, 2> lattice(u * u, 2);
  for (int a = 0; a < u; ++a) {
    for (int b = 0; b < u; ++b) {
      const double s = u == 1 ? 0.0 : -g + 2.0 * g * a / (u - 1);
      const double t = u == 1 ? 0.0 : -g + 2.0 * g * b / (u - 1);
      lattice(a * u + b, 0) = s;
      lattice(a * u + b, 1) = t;
    }
  }
  return lattice;
}

Tensor fold(const Tensor& keypoints, const Tensor& features, const CompletionModel& model) {
  const CompletionConfig& cfg = model.config();
  if (keypoints.rank() != 2 || keypoints.dim(1) != 3 || features.rank() != 2 || features.dim(0) != keypoints.dim(0) ||
      features.dim(1) != cfg.feature_channels()) {
    throw DomainError("fold: keypoints " + ad::to_string(keypoints.shape()) + " and features " +
                      ad::to_string(features.shape()) + " do not match the model");
  }
  const int m = keypoints.dim(0);
  const int t = cfg.fold_u * cfg.fold_u;
  const auto lattice = fold_lattice(cfg.fold_u, model.basis().spacing());
  std::vector<int> repeat(std::size_t(m) * t);
  std::vector<double> grid(std::size_t(m) * t * 2);
  for (int i = 0; i < m; ++i) {
    for (int k = 0; k < t; ++k) {
      const std::size_t row = std::size_t(i) * t + k;
      repeat[row] = i;
      grid[2 * row] = lattice(k, 0);
      grid[2 * row + 1] = lattice(k, 1);
    }
  }
  const Tensor input = ad::concat(Tensor::constant({m * t, 2}, std::move(grid)), ad::take(features, 0, repeat), 1);
  const Tensor hidden = ad::relu(ad::add(ad::matmul(input, model.tensor("fold1.weight")), model.tensor("fold1.bias")));
  const Tensor offsets = ad::add(ad::matmul(hidden, model.tensor("fold2.weight")), model.tensor("fold2.bias"));
  return ad::add(ad::take(keypoints, 0, repeat), offsets);
}

CompletionGraph forward_graph(const Tensor& input, const CompletionModel& model) {
  const CompletionConfig& cfg = model.config();
  const int r = cfg.resolution;
  if (input.shape() != ad::Shape{4, r, r, r}) {
    throw DomainError("completion forward: input " + ad::to_string(input.shape()) + " does not match resolution " +
                      std::to_string(r));
  }
  Tensor h = input;
  for (int s = 0; s < cfg.stages(); ++s) {
    const std::string n = "enc" + std::to_string(s);
    h = ad::maxpool3d(ad::relu(ad::conv3d(h, model.tensor(n + ".weight"), model.tensor(n + ".bias"))));
  }
  h = ad::reshape(h, {1, int(h.size())});
  h = ad::relu(ad::add(ad::matmul(h, model.tensor("fc1.weight")), model.tensor("fc1.bias")));
  h = ad::relu(ad::add(ad::matmul(h, model.tensor("fc2.weight")), model.tensor("fc2.bias")));
  const int b = cfg.bottleneck_extent();
  h = ad::reshape(h, {cfg.bottleneck_channels(), b, b, b});
  for (int s = 0; s < cfg.stages(); ++s) {
    const std::string n = "dec" + std::to_string(s);
    h = ad::relu(ad::deconv3d(h, model.tensor(n + ".weight"), model.tensor(n + ".bias")));
  }
  const int cells = r * r * r;
  const int c = cfg.feature_channels();

  CompletionGraph g;
  g.deltas = ad::transpose(ad::reshape(ad::conv3d(h, model.tensor("delta.weight"), model.tensor("delta.bias")), {3, cells}));
  g.confidence = ad::reshape(ad::softplus(ad::conv3d(h, model.tensor("conf.weight"), model.tensor("conf.bias"))), {cells});
  g.features = ad::transpose(ad::reshape(h, {c, cells}));
  g.selected = select_keypoints(g.confidence.vector(), cfg.keypoints);

  std::vector<double> anchors(std::size_t(cfg.keypoints) * 3);
  for (std::size_t i = 0; i < g.selected.size(); ++i) {
    for (int d = 0; d < 3; ++d) anchors[3 * i + std::size_t(d)] = model.basis().points()(d, g.selected[i]);
  }
  g.keypoints = ad::add(ad::take(g.deltas, 0, g.selected), Tensor::constant({cfg.keypoints, 3}, std::move(anchors)));
  g.full = fold(g.keypoints, ad::take(g.features, 0, g.selected), model);
  return g;
}

CompletionOutput forward(const BpsEncoding& encoding, const CompletionModel& model) {
  if (encoding.resolution != model.config().resolution) {
    throw DomainError("completion forward: encoding resolution " + std::to_string(encoding.resolution) +
                      " differs from model resolution " + std::to_string(model.config().resolution));
  }
  const CompletionGraph g = forward_graph(encoding_tensor(encoding), model);
  CompletionOutput out;
  out.deltas = to_cloud(g.deltas);
  out.confidence = g.confidence.vector();
  out.keypoints = to_cloud(g.keypoints);
  out.full_cloud = to_cloud(g.full);
  return out;
}

namespace {

void check_points(const Tensor& t, const char* op) {
  if (t.rank() != 2 || t.dim(1) != 3) throw DomainError(std::string(op) + ": expected [n, 3] points, got " + ad::to_string(t.shape()));
}

void accumulate(std::span<double> dst, const PointCloud& grad, double scale) {
  const double* src = grad.data();
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += scale * src[i];
}

}  // namespace

Tensor chamfer_op(const Tensor& p, const PointCloud& target) {
  check_points(p, "chamfer_op");
  auto loss = std::make_shared<LossValue>(chamfer(to_cloud(p), target));
  return ad::custom("chamfer", {p}, {}, {loss->value},
                    [loss](std::span<const double> g, std::size_t, std::span<double> dst) { accumulate(dst, loss->grad_first, g[0]); });
}

Tensor partial_consistency_op(const Tensor& partial, const Tensor& full) {
  check_points(partial, "partial_consistency_op");
  check_points(full, "partial_consistency_op");
  auto loss = std::make_shared<LossValue>(partial_consistency(to_cloud(partial), to_cloud(full)));
  return ad::custom("partial_consistency", {partial, full}, {}, {loss->value},
                    [loss](std::span<const double> g, std::size_t input, std::span<double> dst) {
                      accumulate(dst, input == 0 ? loss->grad_first : loss->grad_second, g[0]);
                    });
}

Tensor mse_op(const Tensor& x, const Eigen::VectorXd& target) {
  if (x.size() != std::size_t(target.size())) {
    throw DomainError("mse_op: " + std::to_string(x.size()) + " values against " + std::to_string(target.size()) + " targets");
  }
  const Tensor diff = ad::sub(x, Tensor::constant(x.shape(), std::vector<double>(target.data(), target.data() + target.size())));
  return ad::scale(ad::reduce_sum(ad::mul(diff, diff)), 1.0 / double(target.size()));
}

TrainingPair make_training_pair(std::string name, const PointCloud& partial, const PointCloud& full,
                                const BasisPointSet& basis) {
  if (full.cols() == 0) throw DomainError("training pair '" + name + "': empty full cloud");
  TrainingPair pair;
  pair.name = std::move(name);
  pair.frame = fit_normalization(partial);
  pair.partial = pair.frame.apply(partial);
  pair.full = pair.frame.apply(full);
  pair.encoding = encode(pair.partial, basis);
  pair.target_distance = distance_field(pair.full, basis);
  return pair;
}

PretrainLoss pretrain_loss(const CompletionGraph& graph, const PointCloud& gt, const Eigen::VectorXd& target_distance) {
  PretrainLoss loss;
  const Tensor cd = chamfer_op(graph.full, gt);
  const Tensor conf = mse_op(graph.confidence, target_distance);
  loss.cd = cd.item();
  loss.conf_mse = conf.item();
  loss.total = ad::add(cd, conf);
  return loss;
}

std::vector<HistoryRow> pretrain(CompletionModel& model, const std::vector<TrainingPair>& data, const TrainConfig& config) {
  if (data.empty()) throw DomainError("pretrain: empty dataset");
  if (config.epochs < 0) throw DomainError("pretrain: negative epoch count");
  const std::size_t n = data.size();
  const std::size_t batch = config.batch_size <= 0 ? n : std::min(n, std::size_t(config.batch_size));
  std::vector<Tensor> inputs;
  inputs.reserve(n);
  for (const auto& pair : data) {
    if (pair.encoding.resolution != model.config().resolution) {
      throw DomainError("pretrain: pair '" + pair.name + "' encoded at resolution " + std::to_string(pair.encoding.resolution));
    }
    inputs.push_back(encoding_tensor(pair.encoding));
  }

  auto& params = model.parameters();
  for (auto& p : params) {
    std::fill(p.first_moment.begin(), p.first_moment.end(), 0.0);
    std::fill(p.second_moment.begin(), p.second_moment.end(), 0.0);
  }
  std::vector<HistoryRow> history;
  std::vector<std::size_t> order(n);
  int step = 0;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t(0));
    if (config.shuffle) {
      Rng rng(derive_seed(config.seed, std::uint64_t(epoch)));
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[rng.below(i)]);
    }
    HistoryRow row;
    row.epoch = epoch;
    for (std::size_t start = 0, b = 0; start < n; start += batch, ++b) {
      const std::size_t end = std::min(n, start + batch);
      ad::zero_grad(params);
      for (std::size_t i = start; i < end; ++i) {
        const TrainingPair& pair = data[order[i]];
        const PretrainLoss loss = pretrain_loss(forward_graph(inputs[order[i]], model), pair.full, pair.target_distance);
        const double value = loss.total.item();
        if (!std::isfinite(value)) {
          throw NumericalError("pretrain: non-finite loss at epoch " + std::to_string(epoch) + ", batch " + std::to_string(b) +
                               " (pair '" + pair.name + "')");
        }
        ad::scale(loss.total, 1.0 / double(end - start)).backward();
        row.loss += value;
        row.cd += loss.cd;
        row.conf_mse += loss.conf_mse;
      }
      ad::adam_step(params, config.adam, ++step);
    }
    row.loss /= double(n);
    row.cd /= double(n);
    row.conf_mse /= double(n);
    history.push_back(row);
  }
  return history;
}

void write_history_csv(const std::filesystem::path& path, const std::vector<HistoryRow>& history) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "epoch,loss,cd,conf_mse\n";
  char buf[128];
  for (const auto& row : history) {
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g\n", row.epoch, row.loss, row.cd, row.conf_mse);
    out << buf;
  }
}

}  // namespace depthint
