#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "selfonn/network.hpp"
#include "selfonn/pipeline/config.hpp"
#include "selfonn/pipeline/corpus.hpp"

namespace selfonn::pipeline {

struct EpochRecord {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double train_psnr = 0.0;  // dB, mean over training patches
    double test_psnr = 0.0;   // dB, mean over held-out patches
};

struct FoldResult {
    std::string model;
    std::size_t fold = 0;
    std::size_t train_count = 0;
    std::size_t test_count = 0;
    bool failed = false;
    std::string error;
    double initial_test_psnr = 0.0;
    double final_train_psnr = 0.0;
    double final_test_psnr = 0.0;
    std::size_t range_warnings = 0;
    std::vector<EpochRecord> curve;
};

struct ModelSummary {
    std::string model;
    std::string noise;
    std::size_t params = 0;
    std::size_t folds_ok = 0;
    std::size_t folds_failed = 0;
    double mean_test_psnr = 0.0;   // over successful folds
    double mean_train_psnr = 0.0;
};

struct ResultsTable {
    std::string noise;
    std::vector<std::string> models;
    std::vector<std::size_t> params;  // learnable parameters, parallel to models
    std::vector<FoldResult> folds;  // ordered by (model, fold)

    [[nodiscard]] std::vector<ModelSummary> summaries() const;
};

/// Corrupts image i with the substream (seed, i); independent of model and order.
[[nodiscard]] std::vector<Tensor> corrupt_corpus(const Corpus& corpus, const NoiseSpec& noise, std::uint64_t seed);

/// Network input for a corrupted image: optionally clamped to [0, 1], then mapped to [-1, 1].
[[nodiscard]] Tensor network_input(const Tensor& noisy, bool clip);
/// Network output for a corrupted image, mapped back to [0, 1].
[[nodiscard]] Tensor restore(const Network& net, const Tensor& noisy, bool clip = true);
/// Mean per-image PSNR (peak 1) of the restored images.
[[nodiscard]] double evaluate(const Network& net, std::span<const Tensor> noisy, std::span<const Tensor> clean,
                              bool clip = true);

/// Trains one network on the given split and records its curve.
/// Divergence marks the result failed instead of throwing.
FoldResult train_fold(Network& net, const ExperimentConfig& config, std::span<const Tensor> train_noisy,
                      std::span<const Tensor> train_clean, std::span<const Tensor> test_noisy,
                      std::span<const Tensor> test_clean, std::uint64_t shuffle_seed);

[[nodiscard]] ArchitectureSpec resolve_model(const ExperimentConfig& config, const std::string& name);
/// Initialization seed for (experiment seed, fold).
[[nodiscard]] std::uint64_t init_seed(std::uint64_t seed, std::size_t fold);
[[nodiscard]] std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t fold);

/// Called with each finished network; used to write checkpoints.
using CheckpointSink = std::function<void(const std::string& model, std::size_t fold, const Network& net)>;

/// Every model in config.arch_preset on every fold (up to fold_limit):
/// train on the fold, test on its complement. Jobs run on config.threads workers.
[[nodiscard]] ResultsTable run_experiment(const ExperimentConfig& config, const Corpus& corpus,
                                          const CheckpointSink& sink = {});

/// Loads the corpus from config.clean_corpus_dir, runs, and writes reports and
/// checkpoints under config.output_dir.
ResultsTable run_experiment(const ExperimentConfig& config);

}  // namespace selfonn::pipeline
