#include "scalenet/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <numeric>
#include <sstream>

#include "scalenet/error.hpp"

namespace scalenet::model {

namespace {

constexpr const char* kConfigTensor = "__config__";
constexpr float kConfigFormat = 1.0f;
constexpr std::array<const char*, 3> kVolumeNames = {"a", "b", "ab"};

std::string join(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
  return s;
}

}  // namespace

std::string_view to_string(Mode mode) {
  switch (mode) {
    case Mode::scalenet: return "scalenet";
    case Mode::d_scalenet: return "d-scalenet";
    case Mode::natural: return "natural";
    case Mode::regression: return "regression";
  }
  return "?";
}

Mode parse_mode(std::string_view name) {
  for (Mode m : {Mode::scalenet, Mode::d_scalenet, Mode::natural, Mode::regression}) {
    if (name == to_string(m)) return m;
  }
  throw ConfigError("unknown mode '" + std::string(name) +
                    "' (expected scalenet, d-scalenet, natural or regression)");
}

void ScaleNetConfig::validate() const {
  auto fail = [](const std::string& why) { throw ConfigError("invalid model config: " + why); };
  if (input_size < 1) fail("input size must be positive");
  if (backbone.empty()) fail("backbone needs at least one block");
  if (aspp_dilations.empty()) fail("ASPP needs at least one branch");
  if (reduction.empty()) fail("reduction needs at least one block");
  auto positive = [](const std::vector<int>& v) {
    return std::all_of(v.begin(), v.end(), [](int x) { return x >= 1; });
  };
  if (!positive(backbone) || !positive(aspp_dilations) || !positive(reduction) || !positive(fc) ||
      aspp_channels < 1) {
    fail("all widths and dilation rates must be >= 1");
  }
  auto sorted = aspp_dilations;
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) {
    fail("dilation rates must be distinct");
  }
  const int stride = 1 << backbone.size();
  if (input_size % stride != 0) {
    fail("input size " + std::to_string(input_size) + " is not divisible by the backbone stride " +
         std::to_string(stride));
  }
  if (!(sigma > 1.0) || bins < 3 || bins % 2 == 0) fail("bins need sigma > 1 and an odd count >= 3");
}

int ScaleNetConfig::feature_grid() const {
  return input_size >> backbone.size();
}

// Stride 2 until the map is 2x2. A 1x1 map would leave batch norm one value
// per sample and channel, which is constant over a batch of identical pairs.
int ScaleNetConfig::reduction_stride(int grid) {
  return grid > 2 ? 2 : 1;
}

int ScaleNetConfig::reduced_grid() const {
  int g = feature_grid();
  for (std::size_t i = 0; i < reduction.size(); ++i) {
    if (reduction_stride(g) == 2) g = (g + 1) / 2;  // k3 s2 p1
  }
  return g;
}

std::string ScaleNetConfig::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "input=" << input_size << " backbone=" << join(backbone) << " aspp=" << join(aspp_dilations)
     << "x" << aspp_channels << " reduction=" << join(reduction) << " fc=" << join(fc)
     << " bins=" << bins << " sigma=" << sigma << " head=" << (is_regression(mode) ? "regression" : "distribution");
  return os.str();
}

bool compatible(const ScaleNetConfig& cfg, Mode mode) {
  return is_regression(cfg.mode) == is_regression(mode);
}

ImageBuffer prepare_image(const ImageBuffer& img, int size) {
  ImageBuffer g = imaging::center_crop_square(imaging::to_grayscale(img));
  if (g.width() == size && g.height() == size) return g;
  return imaging::resize(g, size, size);
}

template <typename T>
scale::ScaleDistribution softmax_double(std::span<const T> logits) {
  scale::ScaleDistribution d;
  d.p.resize(logits.size());
  const double mx = *std::max_element(logits.begin(), logits.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) sum += d.p[i] = std::exp(logits[i] - mx);
  for (double& v : d.p) v /= sum;
  return d;
}

scale::ScaleDistribution distribution_from_logits(std::span<const float> logits) {
  return softmax_double(logits);
}
scale::ScaleDistribution distribution_from_logits(std::span<const double> logits) {
  return softmax_double(logits);
}

// ---------------------------------------------------------------------------
// construction

template <typename T>
nn::Parameter<T>* ScaleNet<T>::add_param(std::string name, nn::Shape shape, double fill) {
  return &params_.emplace_back(std::move(name), Tensor(std::move(shape), static_cast<T>(fill)));
}

template <typename T>
nn::Parameter<T>* ScaleNet<T>::add_weight(std::string name, nn::Shape shape, std::mt19937_64& rng) {
  const std::size_t fan_in = nn::numel(shape) / shape[0];
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> u(-bound, bound);
  Tensor w(std::move(shape));
  for (T& v : w.values()) v = static_cast<T>(u(rng));
  return &params_.emplace_back(std::move(name), std::move(w));
}

template <typename T>
ScaleNet<T>::ScaleNet(ScaleNetConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), bins_((cfg_.validate(), cfg_.make_bins())) {
  std::mt19937_64 rng(init_seed);
  auto conv = [&](const std::string& name, std::size_t in, std::size_t out, nn::ConvGeometry g,
                  std::size_t k, bool bias) {
    Conv c;
    c.w = add_weight(name + ".weight", {out, in, k, k}, rng);
    if (bias) c.b = add_param(name + ".bias", {out}, 0.0);
    c.geom = g;
    return c;
  };

  std::size_t ch = 1;
  for (std::size_t blk = 0; blk < cfg_.backbone.size(); ++blk) {
    const std::size_t w = cfg_.backbone[blk];
    for (int k = 0; k < 2; ++k) {
      backbone_.push_back(conv("backbone." + std::to_string(blk) + "." + std::to_string(k), ch, w,
                               {1, 1, 1}, 3, true));
      ch = w;
    }
  }
  const std::size_t ac = cfg_.aspp_channels;
  for (int d : cfg_.aspp_dilations) {
    aspp_.push_back(conv("aspp." + std::to_string(d), ch, ac, {1, d, d}, 3, true));
  }
  fuse_ = conv("fuse", ac * cfg_.aspp_dilations.size(), ac, {1, 0, 1}, 1, true);

  const std::size_t grid = cfg_.feature_grid();
  for (int v = 0; v < 3; ++v) {
    std::size_t in = grid * grid;
    int g = static_cast<int>(grid);
    for (std::size_t i = 0; i < cfg_.reduction.size(); ++i) {
      const std::string name = std::string("reduce.") + kVolumeNames[v] + "." + std::to_string(i);
      const std::size_t out = cfg_.reduction[i];
      const int stride = ScaleNetConfig::reduction_stride(g);
      if (stride == 2) g = (g + 1) / 2;
      reduce_conv_[v].push_back(conv(name, in, out, {stride, 1, 1}, 3, false));
      Norm& n = reduce_norm_[v].emplace_back();
      n.gamma = add_param(name + ".bn.gamma", {out}, 1.0);
      n.beta = add_param(name + ".bn.beta", {out}, 0.0);
      n.state = nn::BatchNormState<T>(out);
      n.name = name + ".bn";
      in = out;
    }
  }

  const std::size_t rg = cfg_.reduced_grid();
  std::size_t width = 3 * cfg_.reduction.back() * rg * rg;
  std::vector<int> widths = cfg_.fc;
  widths.push_back(cfg_.output_width());
  for (std::size_t i = 0; i < widths.size(); ++i) {
    const std::string name = "fc." + std::to_string(i);
    const std::size_t out = widths[i];
    Dense d;
    d.w = add_weight(name + ".weight", {out, width}, rng);
    d.b = add_param(name + ".bias", {out}, 0.0);
    fc_.push_back(d);
    width = out;
  }
}

template <typename T>
std::vector<nn::Parameter<T>*> ScaleNet<T>::parameters() {
  std::vector<nn::Parameter<T>*> out;
  for (auto& p : params_) out.push_back(&p);
  return out;
}

template <typename T>
std::size_t ScaleNet<T>::parameter_count() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += p.value.size();
  return n;
}

template <typename T>
std::vector<std::pair<std::string, nn::Tensor<T>*>> ScaleNet<T>::buffers() {
  std::vector<std::pair<std::string, Tensor*>> out;
  for (auto& norms : reduce_norm_) {
    for (auto& n : norms) {
      out.emplace_back(n.name + ".running_mean", &n.state.running_mean);
      out.emplace_back(n.name + ".running_var", &n.state.running_var);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// graph

template <typename T>
nn::Var<T> ScaleNet<T>::use(nn::Parameter<T>* p, bool track) const {
  if (!p) return Var();
  return track ? nn::param(*p) : nn::constant(p->value);
}

template <typename T>
nn::Var<T> ScaleNet<T>::features(const Var& x, bool track) {
  const std::size_t s = cfg_.input_size;
  if (x.shape().size() != 4 || x.shape()[1] != 1 || x.shape()[2] != s || x.shape()[3] != s) {
    throw ShapeError("features: expected (N, 1, " + std::to_string(s) + ", " + std::to_string(s) +
                     ") input, got " + nn::shape_str(x.shape()));
  }
  Var h = x;
  for (std::size_t i = 0; i < backbone_.size(); ++i) {
    const Conv& c = backbone_[i];
    h = nn::relu(nn::conv2d(h, use(c.w, track), use(c.b, track), c.geom));
    if (i % 2 == 1) h = nn::max_pool2(h);
  }
  std::vector<Var> branches;
  for (const Conv& c : aspp_) {
    branches.push_back(nn::relu(nn::conv2d(h, use(c.w, track), use(c.b, track), c.geom)));
  }
  h = nn::concat<T>(branches, 1);
  return nn::conv2d(h, use(fuse_.w, track), use(fuse_.b, track), fuse_.geom);
}

template <typename T>
nn::Var<T> ScaleNet<T>::volume(const Var& f_src, const Var& f_tgt) {
  return nn::l2_normalize(nn::relu(nn::correlate(f_src, f_tgt)), 1);
}

template <typename T>
nn::Var<T> ScaleNet<T>::reduce(int which, Var v, bool training, bool track) {
  nn::BatchNormOptions opt;
  opt.training = training;
  for (std::size_t i = 0; i < reduce_conv_[which].size(); ++i) {
    const Conv& c = reduce_conv_[which][i];
    Norm& n = reduce_norm_[which][i];
    v = nn::conv2d(v, use(c.w, track), Var(), c.geom);
    v = nn::relu(nn::batch_norm(v, use(n.gamma, track), use(n.beta, track), n.state, opt));
  }
  return v;
}

template <typename T>
nn::Var<T> ScaleNet<T>::head(const Var& f_a, const Var& f_b, bool training, bool track) {
  const std::array<Var, 3> parts = {
      nn::flatten(reduce(0, volume(f_a, f_a), training, track)),
      nn::flatten(reduce(1, volume(f_b, f_b), training, track)),
      nn::flatten(reduce(2, volume(f_a, f_b), training, track)),
  };
  Var h = nn::concat<T>(parts, 1);
  for (std::size_t i = 0; i < fc_.size(); ++i) {
    h = nn::linear(h, use(fc_[i].w, track), use(fc_[i].b, track));
    if (i + 1 < fc_.size()) h = nn::relu(h);
  }
  return h;
}

template <typename T>
nn::Var<T> ScaleNet<T>::forward(const Tensor& a, const Tensor& b, bool training, bool track) {
  if (a.shape() != b.shape() || a.rank() != 4) {
    throw ShapeError("forward: A and B batches must share an (N, 1, S, S) shape, got " +
                     nn::shape_str(a.shape()) + " and " + nn::shape_str(b.shape()));
  }
  const std::size_t n = a.dim(0);
  nn::Shape stacked_shape = a.shape();
  stacked_shape[0] = 2 * n;
  Tensor stacked(stacked_shape);
  std::copy_n(a.data(), a.size(), stacked.data());
  std::copy_n(b.data(), b.size(), stacked.data() + a.size());
  const Var f = features(nn::constant(std::move(stacked)), track);
  return head(nn::slice_batch(f, 0, n), nn::slice_batch(f, n, 2 * n), training, track);
}

template <typename T>
nn::Var<T> ScaleNet<T>::loss(const Tensor& a, const Tensor& b, const Tensor& target, bool track) {
  const Var out = forward(a, b, true, track);
  return is_regression(cfg_.mode) ? nn::mse_loss(out, target) : nn::kl_div_loss(out, target);
}

// ---------------------------------------------------------------------------
// inference

template <typename T>
nn::Tensor<T> ScaleNet<T>::input_tensor(std::span<const ImageBuffer* const> images) const {
  const std::size_t s = cfg_.input_size;
  Tensor t(nn::Shape{images.size(), 1, s, s});
  for (std::size_t i = 0; i < images.size(); ++i) {
    const ImageBuffer img = prepare_image(*images[i], cfg_.input_size);
    std::copy(img.data().begin(), img.data().end(), t.data() + i * s * s);
  }
  return t;
}

template <typename T>
nn::Tensor<T> ScaleNet<T>::target_tensor(std::span<const LabeledPair* const> batch) const {
  const std::size_t w = cfg_.output_width();
  Tensor t(nn::Shape{batch.size(), w});
  const double log_max = bins_.log_scale(bins_.count() - 1);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const LabeledPair& p = *batch[i];
    if (is_regression(cfg_.mode)) {
      t[i] = static_cast<T>(std::log(p.s_gt) / log_max);
      continue;
    }
    if (p.gt_dist.size() != w) {
      throw ShapeError("target distribution has " + std::to_string(p.gt_dist.size()) +
                       " bins, model expects " + std::to_string(w));
    }
    for (std::size_t j = 0; j < w; ++j) t[i * w + j] = static_cast<T>(p.gt_dist.p[j]);
  }
  return t;
}

template <typename T>
std::array<nn::Tensor<T>, 2> ScaleNet<T>::both_directions(const ImageBuffer& a,
                                                          const ImageBuffer& b) const {
  // Eval-mode forwards read the batch-norm state without writing it, so the
  // mutable access below never modifies the model.
  auto& self = const_cast<ScaleNet&>(*this);
  const std::array<const ImageBuffer*, 2> images = {&a, &b};
  const Var f = self.features(nn::constant(input_tensor(images)), false);
  const Var fa = nn::slice_batch(f, 0, 1), fb = nn::slice_batch(f, 1, 2);
  return {self.head(fa, fb, false, false).value(), self.head(fb, fa, false, false).value()};
}

template <typename T>
void ScaleNet<T>::require_mode(Mode mode) const {
  if (!compatible(cfg_, mode)) {
    throw ConfigError("mode " + std::string(to_string(mode)) + " needs a " +
                      (is_regression(mode) ? "regression" : "distribution") +
                      " head, but the model has: " + cfg_.describe());
  }
}

template <typename T>
Prediction ScaleNet<T>::predict(const ImageBuffer& a, const ImageBuffer& b, Mode mode) const {
  require_mode(mode);
  const auto out = both_directions(a, b);
  Prediction p;
  if (is_regression(mode)) {
    const double log_max = bins_.log_scale(bins_.count() - 1);
    p.a_to_b = scale::ScaleEstimate::from_log(static_cast<double>(out[0][0]) * log_max);
    p.b_to_a = scale::ScaleEstimate::from_log(static_cast<double>(out[1][0]) * log_max);
    return p;
  }
  p.dist_ab = distribution_from_logits(out[0].values());
  p.dist_ba = distribution_from_logits(out[1].values());
  switch (mode) {
    case Mode::scalenet: {
      const auto fwd = scale::soft_log_scale(p.dist_ab, bins_);
      const auto bwd = scale::soft_log_scale(p.dist_ba, bins_);
      p.a_to_b = scale::consistency_combine(fwd, bwd);
      p.b_to_a = scale::consistency_combine(bwd, fwd);
      break;
    }
    case Mode::natural: {
      const auto fwd = scale::natural_soft_scale(p.dist_ab, bins_);
      const auto bwd = scale::natural_soft_scale(p.dist_ba, bins_);
      p.a_to_b = scale::consistency_combine(fwd, bwd);
      p.b_to_a = scale::consistency_combine(bwd, fwd);
      break;
    }
    default:
      p.a_to_b = scale::hard_scale(p.dist_ab, bins_);
      p.b_to_a = scale::hard_scale(p.dist_ba, bins_);
  }
  return p;
}

template <typename T>
scale::ScaleDistribution ScaleNet<T>::predict_distribution(const ImageBuffer& a,
                                                           const ImageBuffer& b) const {
  require_mode(Mode::scalenet);
  auto& self = const_cast<ScaleNet&>(*this);  // eval mode: state is read only
  const std::array<const ImageBuffer*, 1> ia = {&a}, ib = {&b};
  const Var logits = self.forward(input_tensor(ia), input_tensor(ib), false, false);
  return distribution_from_logits(logits.value().values());
}

template <typename T>
scale::ScaleEstimate ScaleNet<T>::predict_scale(const ImageBuffer& a, const ImageBuffer& b,
                                                Mode mode) const {
  return predict(a, b, mode).a_to_b;
}

template <typename T>
scale::ScaleEstimate ScaleNet<T>::regression_forward(const ImageBuffer& a, const ImageBuffer& b) const {
  require_mode(Mode::regression);
  auto& self = const_cast<ScaleNet&>(*this);  // eval mode: state is read only
  const std::array<const ImageBuffer*, 1> ia = {&a}, ib = {&b};
  const Var out = self.forward(input_tensor(ia), input_tensor(ib), false, false);
  return scale::ScaleEstimate::from_log(static_cast<double>(out.value()[0]) *
                                        bins_.log_scale(bins_.count() - 1));
}

// ---------------------------------------------------------------------------
// training

template <typename T>
double ScaleNet<T>::train_step(std::span<const LabeledPair* const> batch, nn::Adam<T>& opt, int epoch) {
  std::vector<const ImageBuffer*> as, bs;
  for (const LabeledPair* p : batch) {
    as.push_back(&p->image_a);
    bs.push_back(&p->image_b);
  }
  for (auto& p : params_) p.zero_grad();
  const Var l = loss(input_tensor(as), input_tensor(bs), target_tensor(batch), true);
  const double value = static_cast<double>(l.value()[0]);
  if (!std::isfinite(value)) throw TrainingError("non-finite loss " + std::to_string(value));
  nn::backward(l);
  const auto params = parameters();
  opt.step(params, epoch);
  return value;
}

template <typename T>
double ScaleNet<T>::train_epoch(std::span<const LabeledPair> pairs, nn::Adam<T>& opt, int epoch,
                                const TrainOptions& options) {
  if (pairs.empty()) throw TrainingError("no training pairs");
  if (options.batch_size < 1) throw ConfigError("batch size must be >= 1");
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(labeling::item_seed(options.seed, static_cast<std::uint64_t>(epoch)));
  std::shuffle(order.begin(), order.end(), rng);

  std::mt19937_64 flip(labeling::item_seed(~options.seed, static_cast<std::uint64_t>(epoch)));
  std::bernoulli_distribution coin(0.5);

  std::vector<double> history;
  double weighted = 0.0;
  const std::size_t bs = options.batch_size;
  std::vector<LabeledPair> swapped;
  swapped.reserve(bs);
  for (std::size_t start = 0; start < order.size(); start += bs) {
    std::vector<const LabeledPair*> batch;
    swapped.clear();
    for (std::size_t i = start; i < std::min(order.size(), start + bs); ++i) {
      const LabeledPair& p = pairs[order[i]];
      if (options.both_orders && coin(flip)) {
        swapped.push_back(reversed(p));
        batch.push_back(&swapped.back());
      } else {
        batch.push_back(&p);
      }
    }
    try {
      const double l = train_step(batch, opt, epoch);
      history.push_back(l);
      weighted += l * batch.size();
    } catch (const TrainingError& e) {
      std::ostringstream os;
      os << "epoch " << epoch << ", batch " << start / bs << ": " << e.what() << "; recent losses:";
      const std::size_t from = history.size() > 10 ? history.size() - 10 : 0;
      for (std::size_t i = from; i < history.size(); ++i) os << ' ' << history[i];
      throw TrainingError(os.str());
    }
  }
  return weighted / static_cast<double>(pairs.size());
}

template class ScaleNet<float>;
template class ScaleNet<double>;

labeling::LabeledPair reversed(const labeling::LabeledPair& pair) {
  labeling::LabeledPair r;
  r.image_a = pair.image_b;
  r.image_b = pair.image_a;
  r.s_gt = 1.0 / pair.s_gt;
  r.gt_dist.p.assign(pair.gt_dist.p.rbegin(), pair.gt_dist.p.rend());
  return r;
}

// ---------------------------------------------------------------------------
// checkpoints

namespace {

nn::Tensor<float> encode_config(const ScaleNetConfig& cfg) {
  std::vector<float> v{kConfigFormat, static_cast<float>(cfg.input_size)};
  auto list = [&](const std::vector<int>& xs) {
    v.push_back(static_cast<float>(xs.size()));
    for (int x : xs) v.push_back(static_cast<float>(x));
  };
  list(cfg.backbone);
  list(cfg.aspp_dilations);
  v.push_back(static_cast<float>(cfg.aspp_channels));
  list(cfg.reduction);
  list(cfg.fc);
  v.push_back(static_cast<float>(cfg.bins));
  // sigma bit-exactly, as four 16-bit chunks (each exact in a float)
  const auto bits = std::bit_cast<std::uint64_t>(cfg.sigma);
  for (int k = 0; k < 4; ++k) v.push_back(static_cast<float>((bits >> (16 * k)) & 0xFFFF));
  v.push_back(static_cast<float>(static_cast<int>(cfg.mode)));
  const std::size_t n = v.size();
  return nn::Tensor<float>(nn::Shape{n}, std::move(v));
}

ScaleNetConfig decode_config(const nn::Tensor<float>& t) {
  const auto v = t.values();
  std::size_t pos = 0;
  auto next = [&](const char* what) -> int {
    if (pos >= v.size()) throw CheckpointError(std::string("config header truncated at ") + what);
    const float f = v[pos++];
    if (!(f >= 0.0f && f <= 65536.0f) || f != std::floor(f)) {
      throw CheckpointError(std::string("config header has an invalid ") + what);
    }
    return static_cast<int>(f);
  };
  auto list = [&](const char* what) {
    std::vector<int> xs(next(what));
    for (int& x : xs) x = next(what);
    return xs;
  };
  if (next("format") != static_cast<int>(kConfigFormat)) {
    throw CheckpointError("unsupported config header format");
  }
  ScaleNetConfig cfg;
  cfg.input_size = next("input size");
  cfg.backbone = list("backbone widths");
  cfg.aspp_dilations = list("dilation rates");
  cfg.aspp_channels = next("ASPP channels");
  cfg.reduction = list("reduction widths");
  cfg.fc = list("fc widths");
  cfg.bins = next("bin count");
  std::uint64_t bits = 0;
  for (int k = 0; k < 4; ++k) bits |= static_cast<std::uint64_t>(next("sigma")) << (16 * k);
  cfg.sigma = std::bit_cast<double>(bits);
  const int mode = next("mode");
  if (mode > static_cast<int>(Mode::regression)) throw CheckpointError("config header has an invalid mode");
  cfg.mode = static_cast<Mode>(mode);
  if (pos != v.size()) throw CheckpointError("config header has trailing values");
  try {
    cfg.validate();
  } catch (const ConfigError& e) {
    throw CheckpointError(e.what());
  }
  return cfg;
}

}  // namespace

std::vector<nn::NamedTensor> model_tensors(ScaleNet<float>& net) {
  std::vector<nn::NamedTensor> out;
  out.push_back({kConfigTensor, encode_config(net.config())});
  for (auto* p : net.parameters()) out.push_back({p->name, p->value});
  for (auto& [name, t] : net.buffers()) out.push_back({name, *t});
  return out;
}

ScaleNet<float> model_from_tensors(const std::vector<nn::NamedTensor>& tensors) {
  std::map<std::string, const nn::Tensor<float>*> by_name;
  for (const auto& t : tensors) {
    if (!by_name.emplace(t.name, &t.value).second) {
      throw CheckpointError("duplicate tensor '" + t.name + "'");
    }
  }
  const auto cfg_it = by_name.find(kConfigTensor);
  if (cfg_it == by_name.end()) throw CheckpointError("checkpoint has no config header");
  ScaleNet<float> net(decode_config(*cfg_it->second), 0);
  by_name.erase(cfg_it);

  auto assign = [&](const std::string& name, nn::Tensor<float>& dst) {
    const auto it = by_name.find(name);
    if (it == by_name.end()) throw CheckpointError("checkpoint is missing tensor '" + name + "'");
    if (it->second->shape() != dst.shape()) {
      throw CheckpointError("tensor '" + name + "': expected shape " + nn::shape_str(dst.shape()) +
                            ", found " + nn::shape_str(it->second->shape()));
    }
    dst = *it->second;
    by_name.erase(it);
  };
  for (auto* p : net.parameters()) assign(p->name, p->value);
  for (auto& [name, t] : net.buffers()) assign(name, *t);
  if (!by_name.empty()) {
    throw CheckpointError("checkpoint has unexpected tensor '" + by_name.begin()->first + "'");
  }
  return net;
}

void save_model(const std::filesystem::path& path, ScaleNet<float>& net) {
  nn::save_checkpoint(path, model_tensors(net));
}

ScaleNet<float> load_model(const std::filesystem::path& path) {
  return model_from_tensors(nn::load_checkpoint(path));
}

}  // namespace scalenet::model
