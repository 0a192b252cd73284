#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "selfonn/restoration.hpp"

namespace selfonn::pipeline {

/// Every field has a default, so an empty config file is runnable.
///
/// Keys accepted in `key = value` files (same names as the fields):
///   arch_preset      comma-separated preset names, e.g. "CNN-1,SelfONN-3"
///   noise            awgn[:snr_db] | impulse[:p] | speckle[:M]
///   epochs, folds, fold_limit, batch_size, eval_stride, seed, kernel
///   learning_rate, momentum, clip_input (true/false)
///   clean_corpus_dir, output_dir
struct ExperimentConfig {
    std::vector<std::string> arch_preset{"SelfONN-3"};
    NoiseSpec noise{};
    std::size_t epochs = 100;
    std::size_t folds = 10;
    std::size_t fold_limit = 0;  // 0 runs every fold
    std::size_t batch_size = 10;
    std::size_t eval_stride = 1;  // held-out PSNR every n epochs
    std::size_t kernel = 0;       // 0 keeps the preset's kernel
    std::uint64_t seed = 1;
    double learning_rate = 0.01;
    double momentum = 0.9;
    bool clip_input = true;  // clamp corrupted network inputs to [0, 1]
    std::filesystem::path clean_corpus_dir;
    std::filesystem::path output_dir;
    std::size_t threads = 1;  // from SELFONN_THREADS, never from the file

    void validate() const;
};

/// Applies one key/value pair; throws std::invalid_argument on unknown keys
/// or malformed values.
void apply_setting(ExperimentConfig& config, std::string_view key, std::string_view value);

/// Parses `key = value` lines; `#` starts a comment.
void parse_config(std::istream& in, ExperimentConfig& config);
[[nodiscard]] ExperimentConfig load_config(const std::filesystem::path& path);

/// Canonical text form, loadable by parse_config.
[[nodiscard]] std::string to_config_text(const ExperimentConfig& config);

/// SELFONN_THREADS, or 1 when unset.
[[nodiscard]] std::size_t threads_from_env();

}  // namespace selfonn::pipeline
