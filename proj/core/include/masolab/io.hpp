#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "masolab/dataset.hpp"
#include "masolab/network.hpp"
#include "masolab/structured.hpp"
#include "masolab/train.hpp"

namespace masolab {

// ---------------------------------------------------------------------------
// Data sets.

enum class Layout2D {
    RingsAndBlobs,  ///< two concentric rings and two Gaussian blobs (4 classes)
    Blobs,          ///< one Gaussian blob per class on a circle of radius 2
};

struct Synthetic2DSpec {
    std::size_t classes = 4;
    std::size_t per_class = 1000;
    Layout2D layout = Layout2D::RingsAndBlobs;
    std::uint64_t seed = 0;
};

/// Points in [-3, 3]^2, class-major order.
Dataset gen_synthetic_2d(const Synthetic2DSpec& spec);

struct ImageDataset {
    Dataset data;
    std::size_t rows = 0;
    std::size_t cols = 0;
    DenseVector mean;  ///< per-pixel mean removed after scaling to [0, 1]
};

/// IDX images (magic 0x00000803) and labels (0x00000801), at most `limit`
/// items. Pixels are scaled to [0, 1] and centered per pixel. Malformed input
/// raises FormatError naming the byte offset.
ImageDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                      std::size_t limit);

/// Rows "f_1,...,f_D,label"; blank lines and lines starting with '#' are skipped.
Dataset load_csv(const std::filesystem::path& path);
void save_csv(const Dataset& data, const std::filesystem::path& path);

// ---------------------------------------------------------------------------
// Models.

inline constexpr int kModelFormatVersion = 1;

/// JSON document with lossless (shortest round-trip) number formatting.
std::string model_to_json(const Network& net, std::optional<std::uint64_t> seed = std::nullopt);
/// Throws FormatError on malformed JSON, version mismatch, unknown layer
/// kinds, missing or ill-shaped fields, and fingerprint mismatch.
Network model_from_json(const std::string& text);

void save_model(const Network& net, const std::filesystem::path& path,
                std::optional<std::uint64_t> seed = std::nullopt);
Network load_model(const std::filesystem::path& path);

std::string fingerprint_hex(std::uint64_t fp);

// ---------------------------------------------------------------------------
// Experiment configuration.

struct NetworkSpec {
    Shape3 input_shape{2, 1, 1};
    std::vector<LayerPlan> layers;
    std::size_t classes = 4;
    InitOptions init;
};

struct DataSpec {
    enum class Source { Synthetic2D, Idx, Csv };
    Source source = Source::Synthetic2D;
    Synthetic2DSpec synthetic;
    std::string images;
    std::string labels;
    std::size_t limit = 1000;
    std::string path;
};

struct AnalysisSpec {
    std::size_t level = 0;        ///< 0 selects the last level
    std::size_t resolution = 256;  ///< grid points per axis
    double extent = 3.0;           ///< grid covers [-extent, extent]^2
    std::size_t samples = 100;     ///< inputs used by per-example checks
    std::size_t neighbors = 15;
    std::size_t queries = 5;
    std::size_t clusters = 4;
    std::size_t iterations = 100;
    std::size_t bins = 50;
};

struct ExperimentConfig {
    std::string name = "experiment";
    std::uint64_t seed = 0;
    std::string output_dir;
    std::string model;  ///< optional path of a saved model
    NetworkSpec network;
    TrainConfig train;
    DataSpec data;
    AnalysisSpec analysis;
};

/// Validates against the shipped schema rules (unknown keys, types and ranges
/// are errors) and throws FormatError with a JSON-pointer style location.
ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

Network build_network(const NetworkSpec& spec, std::uint64_t seed);
Dataset load_dataset(const DataSpec& spec);

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace masolab
