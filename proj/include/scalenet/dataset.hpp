#pragma once

// On-disk synthetic pair sets: <dir>/manifest.csv plus one PGM per image.
//
// manifest.csv columns: pair,a,b,s_gt,rotation,skew,source
// (a and b are file names relative to <dir>).

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scalenet/labeling.hpp"

namespace scalenet::data {

using imaging::ImageBuffer;
using labeling::LabeledPair;

struct PairRecord {
  std::string name;
  std::string file_a;
  std::string file_b;
  double s_gt = 1.0;
  double rotation = 0.0;
  double skew = 0.0;
  std::string source;
};

struct GenOptions {
  labeling::SynthParams params;
  std::size_t count = 0;
  std::uint64_t seed = 0;
  int input_size = 128;
};

struct GeneratedPair {
  LabeledPair pair;
  labeling::SynthTransform transform;
  std::size_t source = 0;  // index into the source list
};

// Sorted *.pgm / *.ppm files in `dir`.
std::vector<std::filesystem::path> list_images(const std::filesystem::path& dir);

// Item i draws its transform from item_seed(seed, i) and uses source i mod |sources|.
GeneratedPair generate_pair(std::span<const ImageBuffer> sources, const GenOptions& options,
                            const scale::ScaleBins& bins, std::size_t index);

// Writes count pairs and the manifest. Returns the records written.
std::vector<PairRecord> write_dataset(const std::filesystem::path& out_dir,
                                      std::span<const ImageBuffer> sources,
                                      std::span<const std::string> source_names,
                                      const GenOptions& options, const scale::ScaleBins& bins);

std::vector<PairRecord> read_manifest(const std::filesystem::path& dir);  // ParseError
std::vector<LabeledPair> load_dataset(const std::filesystem::path& dir, const scale::ScaleBins& bins,
                                      std::vector<PairRecord>* records = nullptr);

// Round-trip through the 8-bit on-disk representation.
ImageBuffer quantize(const ImageBuffer& img);

}  // namespace scalenet::data
