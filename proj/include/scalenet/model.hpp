#pragma once

#include <array>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scalenet/autograd.hpp"
#include "scalenet/checkpoint.hpp"
#include "scalenet/imaging.hpp"
#include "scalenet/labeling.hpp"
#include "scalenet/optim.hpp"
#include "scalenet/scale_space.hpp"

namespace scalenet::model {

using imaging::ImageBuffer;
using labeling::LabeledPair;

// Readout variants. The first three share a distribution head trained with
// KL; regression has a single linear output trained with squared error.
enum class Mode { scalenet, d_scalenet, natural, regression };

std::string_view to_string(Mode mode);
Mode parse_mode(std::string_view name);  // "scalenet", "d-scalenet", "natural", "regression"
inline bool is_regression(Mode mode) { return mode == Mode::regression; }

struct ScaleNetConfig {
  int input_size = 128;                       // square, grayscale
  std::vector<int> backbone{16, 32, 64};      // per block: two 3x3 conv+ReLU, then 2x max-pool
  std::vector<int> aspp_dilations{2, 3, 4};   // parallel dilated 3x3 branches
  int aspp_channels = 64;                     // per branch and after the 1x1 fusion
  std::vector<int> reduction{32, 16, 8, 4};   // Conv-BN-ReLU blocks per volume, stride 2 down to 2x2
  std::vector<int> fc{256, 128};              // hidden widths; the output layer is appended
  double sigma = scale::ScaleBins::kDefaultSigma;
  int bins = scale::ScaleBins::kDefaultCount;
  Mode mode = Mode::scalenet;

  void validate() const;  // ConfigError
  scale::ScaleBins make_bins() const { return scale::make_bins(sigma, bins); }
  int feature_grid() const;     // input_size / 2^blocks
  int reduced_grid() const;     // after the stride-2 reductions
  static int reduction_stride(int grid);
  int output_width() const { return is_regression(mode) ? 1 : bins; }
  std::string describe() const;

  friend bool operator==(const ScaleNetConfig&, const ScaleNetConfig&) = default;
};

// Same head (distribution vs regression), so one checkpoint serves the mode.
bool compatible(const ScaleNetConfig& cfg, Mode mode);

// Grayscale, center-cropped to a square and resized to size x size.
ImageBuffer prepare_image(const ImageBuffer& img, int size);

struct TrainOptions {
  int batch_size = 8;
  std::uint64_t seed = 0;  // data order
  // Present each pair as (A, B) or (B, A) at random, so the B->A direction
  // read by the consistency check is trained too.
  bool both_orders = true;
};

// (B, A) with scale 1/s and the mirrored target distribution.
labeling::LabeledPair reversed(const labeling::LabeledPair& pair);

struct Prediction {
  scale::ScaleEstimate a_to_b;
  scale::ScaleEstimate b_to_a;
  scale::ScaleDistribution dist_ab;  // empty in regression mode
  scale::ScaleDistribution dist_ba;
};

template <typename T>
class ScaleNet {
 public:
  using Var = nn::Var<T>;
  using Tensor = nn::Tensor<T>;

  ScaleNet(ScaleNetConfig cfg, std::uint64_t init_seed);
  ScaleNet(ScaleNet&&) noexcept = default;
  ScaleNet& operator=(ScaleNet&&) noexcept = default;
  ScaleNet(const ScaleNet&) = delete;
  ScaleNet& operator=(const ScaleNet&) = delete;

  const ScaleNetConfig& config() const noexcept { return cfg_; }
  const scale::ScaleBins& bins() const noexcept { return bins_; }

  // Parameters in creation order (also the checkpoint order).
  std::vector<nn::Parameter<T>*> parameters();
  std::size_t parameter_count() const;
  // BatchNorm running statistics, named.
  std::vector<std::pair<std::string, Tensor*>> buffers();

  // --- graph pieces. `track` records gradients for the parameters. --------
  // (N, 1, S, S) -> (N, C, g, g)
  Var features(const Var& x, bool track);
  // relu(correlate) then L2 over the source axis.
  static Var volume(const Var& f_src, const Var& f_tgt);
  // Logits (N, L) or regression output (N, 1) from a feature pair.
  Var head(const Var& f_a, const Var& f_b, bool training, bool track);
  // Full graph on stacked (N, 1, S, S) inputs; one backbone pass for A and B.
  Var forward(const Tensor& a, const Tensor& b, bool training, bool track);
  // Training loss for a batch: KL(target || softmax) or squared error.
  Var loss(const Tensor& a, const Tensor& b, const Tensor& target, bool track);

  // --- inference (eval-mode batch norm; safe to call concurrently) --------
  scale::ScaleDistribution predict_distribution(const ImageBuffer& a, const ImageBuffer& b) const;
  scale::ScaleEstimate predict_scale(const ImageBuffer& a, const ImageBuffer& b, Mode mode) const;
  scale::ScaleEstimate regression_forward(const ImageBuffer& a, const ImageBuffer& b) const;
  // Both directions under `mode`.
  Prediction predict(const ImageBuffer& a, const ImageBuffer& b, Mode mode) const;

  // One pass over `pairs` in seeded order; mean loss. TrainingError on a non-finite loss.
  double train_epoch(std::span<const LabeledPair> pairs, nn::Adam<T>& opt, int epoch,
                     const TrainOptions& options);
  // Single optimizer step on a batch; returns its loss.
  double train_step(std::span<const LabeledPair* const> batch, nn::Adam<T>& opt, int epoch);

  Tensor input_tensor(std::span<const ImageBuffer* const> images) const;
  Tensor target_tensor(std::span<const LabeledPair* const> batch) const;

 private:
  struct Conv {
    nn::Parameter<T>* w = nullptr;
    nn::Parameter<T>* b = nullptr;  // null when followed by batch norm
    nn::ConvGeometry geom;
  };
  struct Norm {
    nn::Parameter<T>* gamma = nullptr;
    nn::Parameter<T>* beta = nullptr;
    nn::BatchNormState<T> state;
    std::string name;
  };
  struct Dense {
    nn::Parameter<T>* w = nullptr;
    nn::Parameter<T>* b = nullptr;
  };

  nn::Parameter<T>* add_param(std::string name, nn::Shape shape, double fill);
  nn::Parameter<T>* add_weight(std::string name, nn::Shape shape, std::mt19937_64& rng);
  Var use(nn::Parameter<T>* p, bool track) const;
  Var reduce(int which, Var v, bool training, bool track);
  // Eval-mode logits for (a,b) and (b,a).
  std::array<Tensor, 2> both_directions(const ImageBuffer& a, const ImageBuffer& b) const;
  void require_mode(Mode mode) const;

  ScaleNetConfig cfg_;
  scale::ScaleBins bins_;
  std::deque<nn::Parameter<T>> params_;
  std::vector<Conv> backbone_;  // two per block
  std::vector<Conv> aspp_;
  Conv fuse_;
  std::array<std::vector<Conv>, 3> reduce_conv_;  // c_A, c_B, c_AB
  std::array<std::deque<Norm>, 3> reduce_norm_;
  std::vector<Dense> fc_;
};

// Distribution over the bins from raw logits (double-precision softmax).
scale::ScaleDistribution distribution_from_logits(std::span<const float> logits);
scale::ScaleDistribution distribution_from_logits(std::span<const double> logits);

void save_model(const std::filesystem::path& path, ScaleNet<float>& net);
ScaleNet<float> load_model(const std::filesystem::path& path);
std::vector<nn::NamedTensor> model_tensors(ScaleNet<float>& net);
ScaleNet<float> model_from_tensors(const std::vector<nn::NamedTensor>& tensors);

}  // namespace scalenet::model
