#include "selfonn/pipeline/experiment.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <thread>

#include "selfonn/pipeline/report.hpp"

namespace selfonn::pipeline {

std::vector<ModelSummary> ResultsTable::summaries() const {
    std::vector<ModelSummary> out;
    for (std::size_t m = 0; m < models.size(); ++m) {
        const auto& model = models[m];
        ModelSummary s;
        s.model = model;
        s.params = m < params.size() ? params[m] : 0;
        s.noise = noise;
        double test_sum = 0.0;
        double train_sum = 0.0;
        for (const auto& f : folds) {
            if (f.model != model) {
                continue;
            }
            if (f.failed) {
                ++s.folds_failed;
                continue;
            }
            ++s.folds_ok;
            test_sum += f.final_test_psnr;
            train_sum += f.final_train_psnr;
        }
        if (s.folds_ok > 0) {
            s.mean_test_psnr = test_sum / static_cast<double>(s.folds_ok);
            s.mean_train_psnr = train_sum / static_cast<double>(s.folds_ok);
        } else {
            s.mean_test_psnr = std::nan("");
            s.mean_train_psnr = std::nan("");
        }
        out.push_back(std::move(s));
    }
    return out;
}

std::vector<Tensor> corrupt_corpus(const Corpus& corpus, const NoiseSpec& noise, std::uint64_t seed) {
    std::vector<Tensor> noisy;
    noisy.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        Rng rng = Rng::substream(seed, i);
        noisy.push_back(corrupt(corpus.images[i], noise, rng));
    }
    return noisy;
}

Tensor network_input(const Tensor& noisy, bool clip) {
    if (!clip) {
        return normalize(noisy);
    }
    Tensor clamped = noisy;
    for (double& v : clamped.data()) {
        v = std::clamp(v, 0.0, 1.0);
    }
    return normalize(clamped);
}

Tensor restore(const Network& net, const Tensor& noisy, bool clip) {
    RangeDiagnostics quiet;
    return denormalize(net.forward(network_input(noisy, clip), &quiet));
}

double evaluate(const Network& net, std::span<const Tensor> noisy, std::span<const Tensor> clean, bool clip) {
    if (noisy.size() != clean.size()) {
        throw std::invalid_argument("evaluate: noisy and clean counts differ");
    }
    if (noisy.empty()) {
        return std::nan("");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < noisy.size(); ++i) {
        sum += psnr(clean[i], restore(net, noisy[i], clip), 1.0);
    }
    return sum / static_cast<double>(noisy.size());
}

FoldResult train_fold(Network& net, const ExperimentConfig& config, std::span<const Tensor> train_noisy,
                      std::span<const Tensor> train_clean, std::span<const Tensor> test_noisy,
                      std::span<const Tensor> test_clean, std::uint64_t shuffle) {
    FoldResult result;
    result.model = net.spec().name;
    result.train_count = train_noisy.size();
    result.test_count = test_noisy.size();

    std::vector<Tensor> inputs;
    std::vector<Tensor> targets;
    for (std::size_t i = 0; i < train_noisy.size(); ++i) {
        inputs.push_back(network_input(train_noisy[i], config.clip_input));
        targets.push_back(normalize(train_clean[i]));
    }

    RangeDiagnostics diagnostics;
    try {
        result.initial_test_psnr = evaluate(net, test_noisy, test_clean, config.clip_input);
        result.final_test_psnr = result.initial_test_psnr;
        result.final_train_psnr = evaluate(net, train_noisy, train_clean, config.clip_input);
        OptimizerState opt(net, config.learning_rate, config.momentum);
        Rng shuffle_rng(shuffle);
        for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
            const double loss = train_epoch(net, inputs, targets, opt, config.batch_size, shuffle_rng, &diagnostics);
            if (epoch % config.eval_stride == 0 || epoch == config.epochs) {
                EpochRecord rec;
                rec.epoch = epoch;
                rec.train_loss = loss;
                rec.train_psnr = evaluate(net, train_noisy, train_clean, config.clip_input);
                rec.test_psnr = evaluate(net, test_noisy, test_clean, config.clip_input);
                result.curve.push_back(rec);
                result.final_train_psnr = rec.train_psnr;
                result.final_test_psnr = rec.test_psnr;
            }
        }
    } catch (const DivergenceError& e) {
        result.failed = true;
        result.error = e.what();
    } catch (const NumericError& e) {
        result.failed = true;
        result.error = e.what();
    }
    result.range_warnings = diagnostics.out_of_range;
    return result;
}

ArchitectureSpec resolve_model(const ExperimentConfig& config, const std::string& name) {
    ArchitectureSpec spec = preset(name);
    if (config.kernel != 0) {
        spec.kernel = config.kernel;
    }
    return spec;
}

std::uint64_t init_seed(std::uint64_t seed, std::size_t fold) { return substream_seed(seed, 0x1000 + fold); }

std::uint64_t shuffle_seed(std::uint64_t seed, std::size_t fold) { return substream_seed(seed, 0x2000 + fold); }

ResultsTable run_experiment(const ExperimentConfig& config, const Corpus& corpus, const CheckpointSink& sink) {
    config.validate();
    if (corpus.size() < config.folds) {
        throw std::invalid_argument("corpus has " + std::to_string(corpus.size()) + " images but " +
                                    std::to_string(config.folds) + " folds were requested");
    }
    ResultsTable table;
    table.noise = config.noise.str();
    table.models = config.arch_preset;
    for (const auto& name : config.arch_preset) {
        table.params.push_back(count_params(resolve_model(config, name)));
    }

    const std::vector<Tensor> noisy = corrupt_corpus(corpus, config.noise, config.seed);
    const FoldPlan plan = make_folds(corpus.size(), config.folds, config.seed);
    const std::size_t fold_runs = config.fold_limit == 0 ? config.folds : std::min(config.fold_limit, config.folds);

    struct Job {
        std::size_t model;
        std::size_t fold;
    };
    std::vector<Job> jobs;
    for (std::size_t m = 0; m < config.arch_preset.size(); ++m) {
        for (std::size_t f = 0; f < fold_runs; ++f) {
            jobs.push_back({m, f});
        }
    }
    table.folds.resize(jobs.size());

    std::mutex sink_mutex;
    std::atomic<std::size_t> next{0};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            try {
                const auto [m, f] = jobs[j];
                const ArchitectureSpec spec = resolve_model(config, config.arch_preset[m]);
                Network net = build_network(spec, init_seed(config.seed, f));
                auto gather = [](const std::vector<Tensor>& src, const std::vector<std::size_t>& idx) {
                    std::vector<Tensor> out;
                    out.reserve(idx.size());
                    for (auto i : idx) {
                        out.push_back(src[i]);
                    }
                    return out;
                };
                const auto train_idx = plan.members(f);
                const auto test_idx = plan.complement(f);
                const auto train_noisy = gather(noisy, train_idx);
                const auto train_clean = gather(corpus.images, train_idx);
                const auto test_noisy = gather(noisy, test_idx);
                const auto test_clean = gather(corpus.images, test_idx);
                FoldResult r = train_fold(net, config, train_noisy, train_clean, test_noisy, test_clean,
                                          shuffle_seed(config.seed, f));
                r.model = config.arch_preset[m];
                r.fold = f;
                if (sink && !r.failed) {
                    std::lock_guard lock(sink_mutex);
                    sink(r.model, f, net);
                }
                table.folds[j] = std::move(r);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) {
                    first_error = std::current_exception();
                }
            }
        }
    };

    const std::size_t workers = std::max<std::size_t>(1, std::min(config.threads, jobs.size()));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < workers; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }
    if (first_error) {
        std::rethrow_exception(first_error);
    }
    return table;
}

ResultsTable run_experiment(const ExperimentConfig& config) {
    if (config.clean_corpus_dir.empty()) {
        throw std::invalid_argument("experiment needs clean_corpus_dir");
    }
    const Corpus corpus = load_corpus(config.clean_corpus_dir);
    const std::filesystem::path out_dir = config.output_dir.empty() ? std::filesystem::path(".") : config.output_dir;
    const auto ckpt_dir = out_dir / "checkpoints";
    std::filesystem::create_directories(ckpt_dir);
    CheckpointSink sink = [&](const std::string& model, std::size_t fold, const Network& net) {
        save_checkpoint(net, ckpt_dir / (model + "_fold" + std::to_string(fold) + ".ckpt"));
    };
    ResultsTable table = run_experiment(config, corpus, sink);
    for (const auto& f : table.folds) {
        if (f.failed) {
            std::cerr << "warning: " << f.model << " fold " << f.fold << " failed: " << f.error << '\n';
        }
        if (f.range_warnings > 0) {
            std::cerr << "warning: " << f.model << " fold " << f.fold << ": " << f.range_warnings
                      << " generative-layer inputs fell outside [-1, 1] during training\n";
        }
    }
    write_report(table, config, out_dir);
    return table;
}

}  // namespace selfonn::pipeline
