#include "scalenet/dataset.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "scalenet/error.hpp"

namespace scalenet::data {

namespace fs = std::filesystem;

namespace {

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream in(line);
  while (std::getline(in, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

double parse_double(const std::string& s, std::size_t line, const char* what) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) {
    throw ParseError(line, std::string("bad ") + what + " '" + s + "'");
  }
  return v;
}

constexpr const char* kManifestHeader = "pair,a,b,s_gt,rotation,skew,source";

}  // namespace

std::vector<fs::path> list_images(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw Error("not a directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const auto ext = entry.path().extension().string();
    if (entry.is_regular_file() && (ext == ".pgm" || ext == ".ppm")) out.push_back(entry.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

ImageBuffer quantize(const ImageBuffer& img) {
  return imaging::decode_pnm(imaging::encode_pnm(img));
}

GeneratedPair generate_pair(std::span<const ImageBuffer> sources, const GenOptions& options,
                            const scale::ScaleBins& bins, std::size_t index) {
  if (sources.empty()) throw DomainError("generate_pair: no source images");
  labeling::Rng rng(labeling::item_seed(options.seed, index));
  GeneratedPair g;
  g.source = index % sources.size();
  g.transform = labeling::sample_transform(options.params, rng);
  g.pair = labeling::make_pair(sources[g.source], g.transform, bins, options.input_size,
                               options.params.fill);
  return g;
}

std::vector<PairRecord> write_dataset(const fs::path& out_dir, std::span<const ImageBuffer> sources,
                                      std::span<const std::string> source_names,
                                      const GenOptions& options, const scale::ScaleBins& bins) {
  options.params.validate();
  fs::create_directories(out_dir);
  std::vector<PairRecord> records;
  for (std::size_t i = 0; i < options.count; ++i) {
    const GeneratedPair g = generate_pair(sources, options, bins, i);
    char name[32];
    std::snprintf(name, sizeof name, "%06zu", i);
    PairRecord r{name, std::string(name) + "_a.pgm", std::string(name) + "_b.pgm", g.transform.scale,
                 g.transform.rotation_deg, g.transform.skew,
                 g.source < source_names.size() ? source_names[g.source] : std::to_string(g.source)};
    imaging::write_image(out_dir / r.file_a, g.pair.image_a);
    imaging::write_image(out_dir / r.file_b, g.pair.image_b);
    records.push_back(std::move(r));
  }
  std::ofstream out(out_dir / "manifest.csv", std::ios::binary);
  out << kManifestHeader << '\n';
  for (const auto& r : records) {
    out << r.name << ',' << r.file_a << ',' << r.file_b << ',' << format_double(r.s_gt) << ','
        << format_double(r.rotation) << ',' << format_double(r.skew) << ',' << r.source << '\n';
  }
  if (!out) throw Error("failed writing " + (out_dir / "manifest.csv").string());
  return records;
}

std::vector<PairRecord> read_manifest(const fs::path& dir) {
  const fs::path path = dir / "manifest.csv";
  std::ifstream in(path);
  if (!in) throw Error("no manifest at " + path.string());
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line) || line != kManifestHeader) {
    throw ParseError(1, "manifest header must be '" + std::string(kManifestHeader) + "'");
  }
  std::vector<PairRecord> records;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != 7) throw ParseError(line_no, "expected 7 fields, got " + std::to_string(cells.size()));
    PairRecord r;
    r.name = cells[0];
    r.file_a = cells[1];
    r.file_b = cells[2];
    r.s_gt = parse_double(cells[3], line_no, "s_gt");
    r.rotation = parse_double(cells[4], line_no, "rotation");
    r.skew = parse_double(cells[5], line_no, "skew");
    r.source = cells[6];
    if (!(r.s_gt > 0)) throw ParseError(line_no, "s_gt must be positive");
    records.push_back(std::move(r));
  }
  if (records.empty()) throw Error("manifest " + path.string() + " lists no pairs");
  return records;
}

std::vector<LabeledPair> load_dataset(const fs::path& dir, const scale::ScaleBins& bins,
                                      std::vector<PairRecord>* records_out) {
  const auto records = read_manifest(dir);
  std::vector<LabeledPair> pairs;
  pairs.reserve(records.size());
  for (const auto& r : records) {
    LabeledPair p;
    p.image_a = imaging::read_image(dir / r.file_a);
    p.image_b = imaging::read_image(dir / r.file_b);
    p.s_gt = r.s_gt;
    p.gt_dist = scale::gt_distribution_from_scalar(std::clamp(r.s_gt, bins.min_scale(), bins.max_scale()), bins);
    pairs.push_back(std::move(p));
  }
  if (records_out) *records_out = records;
  return pairs;
}

}  // namespace scalenet::data
