// scalenet: data generation, labeling, training, prediction and evaluation.
//
// Exit codes: 0 success, 1 runtime or data error, 2 usage error.

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "scalenet/dataset.hpp"
#include "scalenet/error.hpp"
#include "scalenet/eval.hpp"
#include "scalenet/labeling.hpp"
#include "scalenet/model.hpp"

namespace fs = std::filesystem;
using namespace scalenet;

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<int> parse_int_list(const std::string& text, const char* flag) {
  std::vector<int> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not an integer");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw UsageError(std::string(flag) + ": '" + item + "' is not a number");
    }
  }
  if (out.empty()) throw UsageError(std::string(flag) + ": empty list");
  return out;
}

model::Mode mode_arg(const std::string& name) {
  try {
    return model::parse_mode(name);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

// Writes to `path`, or stdout when empty.
class Output {
 public:
  explicit Output(const std::string& path) {
    if (!path.empty()) {
      file_.open(path, std::ios::binary);
      if (!file_) throw Error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? static_cast<std::ostream&>(file_) : std::cout; }

 private:
  std::ofstream file_;
};

std::vector<imaging::ImageBuffer> read_images(const fs::path& dir, std::vector<std::string>* names) {
  const auto paths = data::list_images(dir);
  if (paths.empty()) throw UsageError("no .pgm/.ppm images in " + dir.string());
  std::vector<imaging::ImageBuffer> images;
  for (const auto& p : paths) {
    images.push_back(imaging::read_image(p));
    if (names) names->push_back(p.filename().string());
  }
  return images;
}

// ---------------------------------------------------------------------------

struct TexturesArgs {
  std::string out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  int size = 256;
};

int run_textures(const TexturesArgs& a) {
  fs::create_directories(a.out);
  eval::TextureOptions opt;
  opt.width = opt.height = a.size;
  for (std::size_t i = 0; i < a.count; ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "texture_%05zu.pgm", i);
    imaging::write_image(fs::path(a.out) / name, eval::procedural_texture(labeling::item_seed(a.seed, i), opt));
  }
  std::cerr << "wrote " << a.count << " textures to " << a.out << "\n";
  return 0;
}

struct GenArgs {
  std::string images, out;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  labeling::SynthParams params;
  int input_size = 128;
  double sigma = scale::ScaleBins::kDefaultSigma;
  int bins = scale::ScaleBins::kDefaultCount;
};

int run_gen(const GenArgs& a) {
  try {
    a.params.validate();
  } catch (const Error& e) {
    throw UsageError(e.what());
  }
  std::vector<std::string> names;
  const auto sources = read_images(a.images, &names);
  data::GenOptions opt;
  opt.params = a.params;
  opt.count = a.count;
  opt.seed = a.seed;
  opt.input_size = a.input_size;
  data::write_dataset(a.out, sources, names, opt, scale::make_bins(a.sigma, a.bins));
  std::cerr << "wrote " << a.count << " pairs to " << a.out << "\n";
  return 0;
}

struct LabelArgs {
  std::string corr;
  int samples = labeling::kDefaultPairSamples;
  std::uint64_t seed = 0;
  double sigma = scale::ScaleBins::kDefaultSigma;
  int bins = scale::ScaleBins::kDefaultCount;
};

int run_label(const LabelArgs& a) {
  const auto cs = labeling::load_correspondences(a.corr);
  labeling::Rng rng(a.seed);
  const auto label = labeling::label_scale(cs, a.samples, rng);
  const auto bins = scale::make_bins(a.sigma, a.bins);
  const auto dist = scale::gt_distribution_from_ratios(label.ratios, bins);
  std::cout << "s_gt=" << fmt(label.s_gt) << "\n";
  std::cout << "bin,scale,p\n";
  for (int i = 0; i < bins.count(); ++i) {
    std::cout << i << ',' << fmt(bins.scale(i)) << ',' << fmt(dist.p[i]) << "\n";
  }
  return 0;
}

struct ModelArgs {
  int input_size = 128;
  std::string backbone = "16,32,64", aspp = "2,3,4", reduction = "32,16,8,4", fc = "256,128";
  int aspp_channels = 64;
  double sigma = scale::ScaleBins::kDefaultSigma;
  int bins = scale::ScaleBins::kDefaultCount;

  model::ScaleNetConfig config(model::Mode mode) const {
    model::ScaleNetConfig c;
    c.input_size = input_size;
    c.backbone = parse_int_list(backbone, "--backbone");
    c.aspp_dilations = parse_int_list(aspp, "--aspp");
    c.aspp_channels = aspp_channels;
    c.reduction = parse_int_list(reduction, "--reduction");
    c.fc = parse_int_list(fc, "--fc");
    c.sigma = sigma;
    c.bins = bins;
    c.mode = mode;
    try {
      c.validate();
    } catch (const ConfigError& e) {
      throw UsageError(e.what());
    }
    return c;
  }
};

struct TrainArgs {
  std::string data, out, loss_csv, mode = "scalenet";
  int epochs = 1, batch = 8;
  std::uint64_t seed = 0;
  double lr = 1e-4;
  ModelArgs model;
};

int run_train(const TrainArgs& a) {
  const model::Mode mode = mode_arg(a.mode);
  const model::ScaleNetConfig cfg = a.model.config(mode);
  const auto pairs = data::load_dataset(a.data, cfg.make_bins());
  model::ScaleNet<float> net(cfg, labeling::item_seed(a.seed, 0x1417));
  nn::OptimizerConfig oc;
  oc.learning_rate = a.lr;
  nn::Adam<float> opt(oc);
  model::TrainOptions to;
  to.batch_size = a.batch;
  to.seed = a.seed;

  Output loss_out(a.loss_csv.empty() ? a.out + ".loss.csv" : a.loss_csv);
  loss_out.stream() << "epoch,lr,loss\n";
  std::cerr << "training " << net.parameter_count() << " parameters on " << pairs.size() << " pairs ("
            << cfg.describe() << ")\n";
  for (int e = 0; e < a.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double loss = net.train_epoch(pairs, opt, e, to);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    loss_out.stream() << e << ',' << fmt(oc.effective_rate(e)) << ',' << fmt(loss) << "\n";
    loss_out.stream().flush();
    std::cerr << "epoch " << e << " loss " << loss << " (" << secs << " s)\n";
  }
  model::save_model(a.out, net);
  return 0;
}

struct PredictArgs {
  std::string ckpt, a, b, mode = "scalenet";
};

int run_predict(const PredictArgs& a) {
  const model::Mode mode = mode_arg(a.mode);
  const auto net = model::load_model(a.ckpt);
  const auto img_a = imaging::read_image(a.a), img_b = imaging::read_image(a.b);
  const auto p = net.predict(img_a, img_b, mode);
  std::cout << "mode=" << model::to_string(mode) << "\n";
  std::cout << "scale_a_to_b=" << fmt(p.a_to_b.scale) << "\n";
  std::cout << "scale_b_to_a=" << fmt(p.b_to_a.scale) << "\n";
  std::cout << "product=" << fmt(p.a_to_b.scale * p.b_to_a.scale) << "\n";
  if (!p.dist_ab.p.empty()) {
    const auto& bins = net.bins();
    std::cout << "bin,scale,p_ab,p_ba\n";
    for (int i = 0; i < bins.count(); ++i) {
      std::cout << i << ',' << fmt(bins.scale(i)) << ',' << fmt(p.dist_ab.p[i]) << ',' << fmt(p.dist_ba.p[i])
                << "\n";
    }
  }
  return 0;
}

struct EvalArgs {
  std::string ckpt, data, out, mode = "scalenet";
  bool oracle = false;
  std::uint64_t seed = 0;
};

int run_eval(const EvalArgs& a) {
  if (a.ckpt.empty() == !a.oracle) throw UsageError("eval needs exactly one of --ckpt or --oracle");
  const model::Mode mode = mode_arg(a.mode);
  std::optional<model::ScaleNet<float>> net;
  if (!a.oracle) net.emplace(model::load_model(a.ckpt));
  const auto bins = net ? net->bins() : scale::make_bins();
  std::vector<data::PairRecord> records;
  const auto pairs = data::load_dataset(a.data, bins, &records);

  std::vector<double> gts, preds;
  for (const auto& p : pairs) {
    gts.push_back(p.s_gt);
    preds.push_back(net ? net->predict_scale(p.image_a, p.image_b, mode).scale : p.s_gt);
  }
  const std::string tag = a.oracle ? "oracle" : std::string(model::to_string(mode));
  const auto report = eval::scale_accuracy(preds, gts, tag);
  eval::Rng rng(a.seed);
  const auto random = eval::scale_accuracy(eval::baseline_predict(eval::Baseline::random, gts.size(), rng), gts, "random");
  const auto constant =
      eval::scale_accuracy(eval::baseline_predict(eval::Baseline::constant, gts.size(), rng), gts, "constant");

  Output out(a.out);
  auto& os = out.stream();
  os << "pair,gt,pred,ratio\n";
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    os << records[i].name << ',' << fmt(gts[i]) << ',' << fmt(preds[i]) << ',' << fmt(report.ratios[i]) << "\n";
  }
  for (const auto* r : {&report, &random, &constant}) os << "MEAN:" << r->tag << ",,," << fmt(r->mean_ratio) << "\n";
  std::cerr << tag << " r=" << report.mean_ratio << "  random r=" << random.mean_ratio
            << "  constant r=" << constant.mean_ratio << "\n";
  return 0;
}

struct SweepArgs {
  std::string ckpt, images, scales = "1,1.5,2,3,4", out, mode = "scalenet";
  int grid_step = 4, patch = 15;
  double threshold = eval::kDefaultMatchThreshold;
};

int run_sweep(const SweepArgs& a) {
  const auto scales = parse_double_list(a.scales, "--scales");
  for (double s : scales) {
    if (!(s > 0)) throw UsageError("--scales: entries must be positive");
  }
  std::optional<model::ScaleNet<float>> net;
  if (!a.ckpt.empty()) net.emplace(model::load_model(a.ckpt));
  const auto images = read_images(a.images, nullptr);
  eval::SweepOptions opt;
  opt.match.grid_step = a.grid_step;
  opt.match.patch = a.patch;
  opt.threshold = a.threshold;
  opt.mode = mode_arg(a.mode);
  const auto rows = eval::mma_scale_sweep(images, scales, net ? &*net : nullptr, opt);
  Output out(a.out);
  out.stream() << "scale,mma_none,mma_pred,mma_oracle\n";
  for (const auto& r : rows) {
    out.stream() << fmt(r.scale) << ',' << fmt(r.mma_none) << ',' << (net ? fmt(r.mma_pred) : "nan") << ','
                 << fmt(r.mma_oracle) << "\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scale estimation between image pairs"};
  app.require_subcommand(1);

  TexturesArgs tx;
  auto* c_tx = app.add_subcommand("textures", "Write procedural texture images");
  c_tx->add_option("--out", tx.out, "Output directory")->required();
  c_tx->add_option("--count", tx.count, "Number of images")->required();
  c_tx->add_option("--seed", tx.seed, "Random seed")->required();
  c_tx->add_option("--size", tx.size, "Side length in pixels")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* c_gen = app.add_subcommand("gen", "Generate synthetic labeled pairs");
  c_gen->add_option("--images", gen.images, "Directory of source .pgm/.ppm images")->required();
  c_gen->add_option("--out", gen.out, "Output directory")->required();
  c_gen->add_option("--count", gen.count, "Number of pairs")->required();
  c_gen->add_option("--seed", gen.seed, "Random seed")->required();
  c_gen->add_option("--scale-min", gen.params.scale_min, "Smallest scale (log-uniform)");
  c_gen->add_option("--scale-max", gen.params.scale_max, "Largest scale");
  c_gen->add_option("--rot-max", gen.params.rotation_max_deg, "Rotation range in degrees (+/-)");
  c_gen->add_option("--skew-max", gen.params.skew_max, "Skew range (+/-)");
  c_gen->add_option("--size", gen.input_size, "Output side length")->check(CLI::PositiveNumber);
  c_gen->add_option("--sigma", gen.sigma, "Scale lattice base");
  c_gen->add_option("--bins", gen.bins, "Number of scale bins");

  LabelArgs label;
  auto* c_label = app.add_subcommand("label", "Scale label from a correspondence CSV");
  c_label->add_option("--corr", label.corr, "CSV with xa,ya,xb,yb rows")->required();
  c_label->add_option("--samples", label.samples, "Number of sampled point pairs");
  c_label->add_option("--seed", label.seed, "Random seed")->required();
  c_label->add_option("--sigma", label.sigma, "Scale lattice base");
  c_label->add_option("--bins", label.bins, "Number of scale bins");

  auto model_flags = [](CLI::App* c, ModelArgs& m) {
    c->add_option("--input-size", m.input_size, "Network input side length");
    c->add_option("--backbone", m.backbone, "Backbone block widths, comma separated");
    c->add_option("--aspp", m.aspp, "ASPP dilation rates");
    c->add_option("--aspp-channels", m.aspp_channels, "ASPP channels");
    c->add_option("--reduction", m.reduction, "Reduction block widths");
    c->add_option("--fc", m.fc, "Hidden fully connected widths");
    c->add_option("--sigma", m.sigma, "Scale lattice base");
    c->add_option("--bins", m.bins, "Number of scale bins");
  };

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train a model");
  c_train->add_option("--data", train.data, "Dataset directory (from gen)")->required();
  c_train->add_option("--out", train.out, "Checkpoint path")->required();
  c_train->add_option("--epochs", train.epochs, "Epochs")->check(CLI::PositiveNumber);
  c_train->add_option("--seed", train.seed, "Random seed")->required();
  c_train->add_option("--mode", train.mode, "scalenet | d-scalenet | natural | regression");
  c_train->add_option("--batch", train.batch, "Batch size")->check(CLI::PositiveNumber);
  c_train->add_option("--lr", train.lr, "Base learning rate");
  c_train->add_option("--loss-csv", train.loss_csv, "Per-epoch loss CSV (default: <out>.loss.csv)");
  model_flags(c_train, train.model);

  PredictArgs pred;
  auto* c_pred = app.add_subcommand("predict", "Predict the scale between two images");
  c_pred->add_option("--ckpt", pred.ckpt, "Checkpoint")->required();
  c_pred->add_option("--a", pred.a, "Image A")->required();
  c_pred->add_option("--b", pred.b, "Image B")->required();
  c_pred->add_option("--mode", pred.mode, "scalenet | d-scalenet | natural | regression");

  EvalArgs ev;
  auto* c_eval = app.add_subcommand("eval", "Mean scale ratio on a dataset, with baselines");
  c_eval->add_option("--ckpt", ev.ckpt, "Checkpoint");
  c_eval->add_flag("--oracle", ev.oracle, "Predict the ground truth (perfect row)");
  c_eval->add_option("--data", ev.data, "Dataset directory")->required();
  c_eval->add_option("--seed", ev.seed, "Seed for the random baseline")->required();
  c_eval->add_option("--mode", ev.mode, "scalenet | d-scalenet | natural | regression");
  c_eval->add_option("--out", ev.out, "CSV path (default: stdout)");

  SweepArgs sw;
  auto* c_sweep = app.add_subcommand("sweep", "Matching accuracy under synthetic scale");
  c_sweep->add_option("--ckpt", sw.ckpt, "Checkpoint (optional; enables the prediction column)");
  c_sweep->add_option("--images", sw.images, "Directory of .pgm/.ppm images")->required();
  c_sweep->add_option("--scales", sw.scales, "Comma separated scales");
  c_sweep->add_option("--mode", sw.mode, "Readout mode for the prediction column");
  c_sweep->add_option("--grid-step", sw.grid_step, "Keypoint grid step")->check(CLI::PositiveNumber);
  c_sweep->add_option("--patch", sw.patch, "Descriptor patch size (odd)")->check(CLI::PositiveNumber);
  c_sweep->add_option("--threshold", sw.threshold, "Correctness threshold in pixels");
  c_sweep->add_option("--out", sw.out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*c_tx) return run_textures(tx);
    if (*c_gen) return run_gen(gen);
    if (*c_label) return run_label(label);
    if (*c_train) return run_train(train);
    if (*c_pred) return run_predict(pred);
    if (*c_eval) return run_eval(ev);
    if (*c_sweep) return run_sweep(sw);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
