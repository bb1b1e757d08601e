// Copyright 2026 The rrseg Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "rrseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <numeric>
#include <random>
#include <thread>

namespace rrseg::model {

using losses::LinearHead;

namespace {

void glorot(LinearHead& head, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / (head.in_dim() + head.num_classes()));
  std::uniform_real_distribution<double> dist(-limit, limit);
  for (Eigen::Index i = 0; i < head.weight.size(); ++i) head.weight.data()[i] = dist(rng);
  head.bias.setZero();
}

bool same(const LinearHead& a, const LinearHead& b) {
  return a.weight.rows() == b.weight.rows() && a.weight.cols() == b.weight.cols() &&
         a.bias.size() == b.bias.size() && a.weight == b.weight && a.bias == b.bias;
}

}  // namespace

PixelClassifier PixelClassifier::init(int input_dim, int hidden_dim,
                                      int num_classes, bool mean_filter,
                                      std::uint64_t seed) {
  if (input_dim < 1 || hidden_dim < 1 || num_classes < 1) {
    throw ConfigError("model dimensions must be positive");
  }
  PixelClassifier m;
  m.hidden = LinearHead(input_dim, hidden_dim);
  m.output = LinearHead(hidden_dim, num_classes);
  m.region_head = LinearHead(hidden_dim, num_classes);
  m.mean_filter = mean_filter;
  std::mt19937_64 rng(seed);
  glorot(m.hidden, rng);
  glorot(m.output, rng);
  glorot(m.region_head, rng);
  return m;
}

Matrix PixelClassifier::hidden_features(const Matrix& inputs) const {
  return hidden.forward(inputs).cwiseMax(0.0);
}

Matrix PixelClassifier::logits(const Matrix& inputs) const {
  return output.forward(hidden_features(inputs));
}

SegMap PixelClassifier::predict(const FeatureImage& image) const {
  const Matrix z = logits(pixel_inputs(image, mean_filter));
  SegMap out(image.height, image.width);
  for (Eigen::Index i = 0; i < z.rows(); ++i) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < z.cols(); ++k) {
      if (z(i, k) > z(i, best)) best = k;
    }
    out.labels[i] = static_cast<Label>(best);
  }
  return out;
}

bool PixelClassifier::operator==(const PixelClassifier& o) const {
  return mean_filter == o.mean_filter && same(hidden, o.hidden) &&
         same(output, o.output) && same(region_head, o.region_head);
}

int input_dim(int feature_dim, bool mean_filter) {
  return mean_filter ? 2 * feature_dim : feature_dim;
}

Matrix pixel_inputs(const FeatureImage& image, bool mean_filter) {
  const int h = image.height, w = image.width, d = image.dim;
  Matrix x(static_cast<Eigen::Index>(h) * w, input_dim(d, mean_filter));
  for (Eigen::Index p = 0; p < x.rows(); ++p) {
    const float* f = image.pixel(static_cast<std::size_t>(p));
    for (int j = 0; j < d; ++j) x(p, j) = f[j];
  }
  if (!mean_filter) return x;
  for (int r = 0; r < h; ++r) {
    for (int c = 0; c < w; ++c) {
      const Eigen::Index p = static_cast<Eigen::Index>(r) * w + c;
      auto dst = x.row(p).segment(d, d);
      dst.setZero();
      int count = 0;
      for (int rr = std::max(0, r - 1); rr <= std::min(h - 1, r + 1); ++rr) {
        for (int cc = std::max(0, c - 1); cc <= std::min(w - 1, c + 1); ++cc) {
          dst += x.row(static_cast<Eigen::Index>(rr) * w + cc).head(d);
          ++count;
        }
      }
      dst /= count;
    }
  }
  return x;
}

void validate(const TrainConfig& cfg) {
  auto fail = [](const std::string& m) { throw ConfigError("train: " + m); };
  if (!(cfg.lr0 > 0.0)) fail("lr0 must be positive");
  if (!std::isfinite(cfg.power)) fail("power must be finite");
  if (cfg.total_iters < 1) fail("total_iters must be >= 1");
  if (cfg.batch_size < 1) fail("batch_size must be positive");
  if (!(cfg.weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (!(cfg.momentum >= 0.0 && cfg.momentum < 1.0)) fail("momentum must lie in [0, 1)");
  if (cfg.hidden_dim < 1) fail("hidden_dim must be positive");
  if (!(cfg.val_fraction > 0.0 && cfg.val_fraction < 1.0)) {
    fail("val_fraction must lie in (0, 1)");
  }
}

double poly_lr(int iter, const TrainConfig& cfg) {
  if (iter < 0 || iter >= cfg.total_iters) {
    throw PreconditionError("poly_lr: iteration " + std::to_string(iter) + " outside [0, " +
                            std::to_string(cfg.total_iters) + ")");
  }
  const double frac = static_cast<double>(iter) / cfg.total_iters;
  return cfg.lr0 * std::pow(1.0 - frac, cfg.power);
}

Split split_indices(std::size_t n, double val_fraction, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::mt19937_64 rng(seed ^ 0x5eed5b1177ull);
  std::shuffle(idx.begin(), idx.end(), rng);
  std::size_t n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
  if (n >= 2) n_val = std::clamp<std::size_t>(n_val, 1, n - 1);
  Split s;
  s.val.assign(idx.begin(), idx.begin() + n_val);
  s.train.assign(idx.begin() + n_val, idx.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.train.begin(), s.train.end());
  return s;
}

losses::LossConfig resolve_priors(const losses::LossConfig& cfg,
                                  const stats::FrequencyTable& t) {
  losses::LossConfig out = cfg;
  if (!out.priors.empty()) return out;
  auto as_double = [](const std::vector<std::uint64_t>& v) {
    return std::vector<double>(v.begin(), v.end());
  };
  switch (cfg.variant) {
    case losses::Variant::kPixelCe:
      break;
    case losses::Variant::kReweight:
      out.priors = losses::inverse_frequency_weights(t.pixel_freq);
      break;
    case losses::Variant::kBalancedPixel: {
      const auto& counts =
          cfg.prior_source == losses::PriorSource::kPixel ? t.pixel_freq : t.region_freq;
      out.priors = as_double(counts);
      for (double p : out.priors) {
        if (p <= 0.0) {
          throw DataError("balanced_pixel: a class never occurs in the training split");
        }
      }
      break;
    }
    case losses::Variant::kRegionRebalance:
      out.priors = as_double(t.region_freq);
      break;
  }
  return out;
}

BatchGradients batch_gradients(const PixelClassifier& model,
                               std::span<const FeatureImage> images,
                               std::span<const SegMap> labels,
                               const losses::LossConfig& loss) {
  if (images.size() != labels.size() || images.empty()) {
    throw PreconditionError("batch needs matching, non-empty images and labels");
  }
  Eigen::Index rows = 0;
  for (const auto& img : images) rows += static_cast<Eigen::Index>(img.height) * img.width;
  Matrix x(rows, model.input_dim());
  Eigen::Index offset = 0;
  for (const auto& img : images) {
    const Matrix xi = pixel_inputs(img, model.mean_filter);
    if (xi.cols() != x.cols()) {
      throw DataError("image feature width does not match the model input");
    }
    x.middleRows(offset, xi.rows()) = xi;
    offset += xi.rows();
  }
  Matrix pre = model.hidden.forward(x);
  const Matrix h = pre.cwiseMax(0.0);

  BatchGradients g;
  g.objective = losses::evaluate_objective(h, labels, model.output,
                                           model.region_head, loss);
  Matrix dpre = g.objective.feature_grad.cwiseProduct(
      (pre.array() > 0.0).cast<double>().matrix());
  g.hidden_grad.weight = x.transpose() * dpre;
  g.hidden_grad.bias = dpre.colwise().sum().transpose();
  return g;
}

namespace {

struct Momentum {
  Matrix vw;
  Vector vb;
};

void sgd_step(LinearHead& p, const LinearHead& g, Momentum& v, double lr,
              double momentum, double weight_decay) {
  v.vw = momentum * v.vw + g.weight + weight_decay * p.weight;
  v.vb = momentum * v.vb + g.bias + weight_decay * p.bias;
  p.weight -= lr * v.vw;
  p.bias -= lr * v.vb;
}

Momentum zeros_like(const LinearHead& p) {
  return {Matrix::Zero(p.weight.rows(), p.weight.cols()), Vector::Zero(p.bias.size())};
}

}  // namespace

TrainResult train(const data::Dataset& ds, const TrainConfig& cfg) {
  validate(cfg);
  if (ds.size() < 2) throw DataError("training needs at least two images");
  if (ds.images.size() != ds.labels.size()) {
    throw DataError("training needs a feature file for every label map");
  }
  TrainResult res;
  res.split = split_indices(ds.size(), cfg.val_fraction, cfg.split_seed);
  res.train_table = stats::FrequencyTable(ds.num_classes);
  for (std::size_t i : res.split.train) res.train_table.add(ds.labels[i], cfg.loss.ignore_label);
  const losses::LossConfig loss = resolve_priors(cfg.loss, res.train_table);
  losses::validate(loss, ds.num_classes);

  res.model = PixelClassifier::init(input_dim(ds.feature_dim(), cfg.mean_filter),
                                    cfg.hidden_dim, ds.num_classes, cfg.mean_filter,
                                    cfg.seed);
  PixelClassifier& m = res.model;
  Momentum vh = zeros_like(m.hidden), vo = zeros_like(m.output),
           vr = zeros_like(m.region_head);

  std::mt19937_64 rng(cfg.seed ^ 0xba7c4e5ull);
  std::uniform_int_distribution<std::size_t> pick(0, res.split.train.size() - 1);
  std::vector<FeatureImage> images(cfg.batch_size);
  std::vector<SegMap> labels(cfg.batch_size);
  res.loss_curve.reserve(cfg.total_iters);
  for (int it = 0; it < cfg.total_iters; ++it) {
    for (int b = 0; b < cfg.batch_size; ++b) {
      const std::size_t idx = res.split.train[pick(rng)];
      images[b] = ds.images[idx];
      labels[b] = ds.labels[idx];
    }
    const BatchGradients g = batch_gradients(m, images, labels, loss);
    if (!std::isfinite(g.objective.loss)) {
      throw NumericError("training diverged at iteration " + std::to_string(it) +
                         " (loss " + std::to_string(g.objective.loss) + ")");
    }
    res.loss_curve.push_back(g.objective.loss);
    const double lr = poly_lr(it, cfg);
    sgd_step(m.hidden, g.hidden_grad, vh, lr, cfg.momentum, cfg.weight_decay);
    sgd_step(m.output, g.objective.pixel_head_grad, vo, lr, cfg.momentum, cfg.weight_decay);
    sgd_step(m.region_head, g.objective.region_head_grad, vr, lr, cfg.momentum,
             cfg.weight_decay);
  }
  res.report = evaluate(m, ds, res.split.val);
  return res;
}

metrics::ConfusionMatrix confusion(const PixelClassifier& model,
                                   const data::Dataset& ds,
                                   std::span<const std::size_t> indices,
                                   unsigned threads) {
  std::vector<std::size_t> all;
  if (indices.empty()) {
    all.resize(ds.size());
    std::iota(all.begin(), all.end(), 0);
    indices = all;
  }
  if (indices.empty()) throw PreconditionError("nothing to evaluate");
  if (ds.images.size() != ds.labels.size()) {
    throw DataError("evaluation needs a feature file for every label map");
  }
  const std::size_t n = indices.size();
  std::vector<SegMap> gts(n), preds(n);
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(n)));
  auto work = [&](unsigned t) {
    for (std::size_t i = n * t / threads; i < n * (t + 1) / threads; ++i) {
      gts[i] = ds.labels[indices[i]];
      preds[i] = model.predict(ds.images[indices[i]]);
    }
  };
  if (threads == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
    for (auto& th : pool) th.join();
  }
  return metrics::accumulate_all(ds.num_classes, gts, preds, threads);
}

metrics::EvalReport evaluate(const PixelClassifier& model, const data::Dataset& ds,
                             std::span<const std::size_t> indices, unsigned threads) {
  return metrics::make_report(confusion(model, ds, indices, threads));
}

namespace {

constexpr char kMagic[8] = {'R', 'R', 'S', 'E', 'G', 'C', 'K', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& s, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& s, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

void put_head(std::string& s, const LinearHead& h) {
  for (Eigen::Index i = 0; i < h.weight.size(); ++i) put_f64(s, h.weight.data()[i]);
  for (Eigen::Index i = 0; i < h.bias.size(); ++i) put_f64(s, h.bias[i]);
}

class Reader {
 public:
  Reader(std::vector<unsigned char> bytes, std::string name)
      : bytes_(std::move(bytes)), name_(std::move(name)) {}

  const unsigned char* take(std::size_t n) {
    if (pos_ + n > bytes_.size()) throw DataError(name_ + ": truncated checkpoint");
    const unsigned char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::uint32_t u32() {
    const auto* p = take(4);
    std::uint32_t v = 0;
    for (int i = 3; i >= 0; --i) v = (v << 8) | p[i];
    return v;
  }
  double f64() {
    const auto* p = take(8);
    std::uint64_t v = 0;
    for (int i = 7; i >= 0; --i) v = (v << 8) | p[i];
    return std::bit_cast<double>(v);
  }
  void head(LinearHead& h) {
    for (Eigen::Index i = 0; i < h.weight.size(); ++i) h.weight.data()[i] = f64();
    for (Eigen::Index i = 0; i < h.bias.size(); ++i) h.bias[i] = f64();
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::vector<unsigned char> bytes_;
  std::string name_;
  std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const PixelClassifier& m) {
  std::string s(kMagic, sizeof(kMagic));
  put_u32(s, kVersion);
  put_u32(s, static_cast<std::uint32_t>(m.input_dim()));
  put_u32(s, static_cast<std::uint32_t>(m.hidden_dim()));
  put_u32(s, static_cast<std::uint32_t>(m.num_classes()));
  put_u32(s, m.mean_filter ? 1u : 0u);
  put_head(s, m.hidden);
  put_head(s, m.output);
  put_head(s, m.region_head);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
  if (!out) throw DataError("error writing " + path.string());
}

PixelClassifier load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  Reader r({std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()},
           path.string());
  if (std::memcmp(r.take(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw DataError(path.string() + ": not a checkpoint");
  }
  if (const auto v = r.u32(); v != kVersion) {
    throw DataError(path.string() + ": unsupported checkpoint version " + std::to_string(v));
  }
  const auto din = r.u32(), dh = r.u32(), c = r.u32(), mf = r.u32();
  if (din == 0 || dh == 0 || c == 0 || din > 1u << 20 || dh > 1u << 20 || c > 1u << 16 ||
      mf > 1) {
    throw DataError(path.string() + ": implausible checkpoint dimensions");
  }
  PixelClassifier m;
  m.hidden = LinearHead(static_cast<int>(din), static_cast<int>(dh));
  m.output = LinearHead(static_cast<int>(dh), static_cast<int>(c));
  m.region_head = LinearHead(static_cast<int>(dh), static_cast<int>(c));
  m.mean_filter = mf == 1;
  r.head(m.hidden);
  r.head(m.output);
  r.head(m.region_head);
  if (!r.done()) throw DataError(path.string() + ": trailing bytes after parameters");
  return m;
}

}  // namespace rrseg::model
