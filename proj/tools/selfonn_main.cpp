#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <list>
#include <optional>
#include <string>
#include <vector>

#include "selfonn/network.hpp"
#include "selfonn/pipeline/config.hpp"
#include "selfonn/pipeline/corpus.hpp"
#include "selfonn/pipeline/experiment.hpp"
#include "selfonn/pipeline/image_io.hpp"
#include "selfonn/pipeline/report.hpp"
#include "selfonn/restoration.hpp"

namespace fs = std::filesystem;
using namespace selfonn;
using namespace selfonn::pipeline;

namespace {

// Flags that override config-file keys. Each is applied through apply_setting
// so the file and the command line share one validator.
struct Overrides {
    std::optional<fs::path> config_file;
    std::list<std::pair<std::string, std::optional<std::string>>> values;  // stable addresses for CLI11
    std::vector<std::string> settings;  // raw key=value from --set

    void add(CLI::App* cmd, const std::string& flag, const std::string& key, const std::string& help) {
        values.emplace_back(key, std::nullopt);
        cmd->add_option(flag, values.back().second, help);
    }

    [[nodiscard]] ExperimentConfig resolve() const {
        ExperimentConfig config = config_file ? load_config(*config_file) : ExperimentConfig{};
        for (const auto& [key, value] : values) {
            if (value) {
                apply_setting(config, key, *value);
            }
        }
        for (const auto& s : settings) {
            const auto eq = s.find('=');
            if (eq == std::string::npos) {
                throw std::invalid_argument("--set expects key=value, got '" + s + "'");
            }
            apply_setting(config, s.substr(0, eq), s.substr(eq + 1));
        }
        config.threads = threads_from_env();
        config.validate();
        return config;
    }
};

void add_experiment_flags(CLI::App* cmd, Overrides& o) {
    cmd->add_option("--config", o.config_file, "key = value config file");
    o.add(cmd, "--preset", "arch_preset", "preset name(s), comma-separated");
    o.add(cmd, "--noise", "noise", "awgn[:snr_db] | impulse[:p] | speckle[:M]");
    o.add(cmd, "--epochs", "epochs", "training epochs");
    o.add(cmd, "--folds", "folds", "fold count");
    o.add(cmd, "--fold-limit", "fold_limit", "run only the first N folds (0 = all)");
    o.add(cmd, "--batch-size", "batch_size", "minibatch size");
    o.add(cmd, "--eval-stride", "eval_stride", "held-out PSNR every N epochs");
    o.add(cmd, "--kernel", "kernel", "override the preset kernel size");
    o.add(cmd, "--seed", "seed", "experiment seed");
    o.add(cmd, "--lr", "learning_rate", "learning rate");
    o.add(cmd, "--momentum", "momentum", "momentum");
    o.add(cmd, "--clip-input", "clip_input", "clamp corrupted inputs to [0, 1] (true/false)");
    o.add(cmd, "--corpus", "clean_corpus_dir", "clean patch directory");
    o.add(cmd, "--output", "output_dir", "output directory");
    cmd->add_option("--set", o.settings, "extra key=value settings");
}

void print_summary(const ResultsTable& table) {
    for (const auto& s : table.summaries()) {
        std::cout << s.model << "  " << s.noise << "  params " << s.params << "  folds " << s.folds_ok << " ok / "
                  << s.folds_failed << " failed  test " << format_number(s.mean_test_psnr, 4) << " dB  train "
                  << format_number(s.mean_train_psnr, 4) << " dB\n";
    }
}

int failed_folds(const ResultsTable& table) {
    int failed = 0;
    for (const auto& f : table.folds) {
        failed += f.failed ? 1 : 0;
    }
    return failed;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Self-organized operational neural networks for image restoration"};
    app.require_subcommand(1);

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "convert images to gray square patches with a manifest");
    fs::path ingest_in;
    fs::path ingest_out;
    std::size_t ingest_size = 60;
    ingest_cmd->add_option("--input", ingest_in, "directory of PGM/PNG images")->required();
    ingest_cmd->add_option("--output", ingest_out, "patch corpus directory")->required();
    ingest_cmd->add_option("--size", ingest_size, "patch side in pixels");

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "write a seeded synthetic patch corpus");
    fs::path synth_out;
    std::size_t synth_count = 200;
    std::size_t synth_size = 60;
    std::uint64_t synth_seed = 1;
    synth_cmd->add_option("--output", synth_out, "corpus directory")->required();
    synth_cmd->add_option("--count", synth_count, "number of patches");
    synth_cmd->add_option("--size", synth_size, "patch side in pixels");
    synth_cmd->add_option("--seed", synth_seed, "pattern seed");

    // corrupt
    auto* corrupt_cmd = app.add_subcommand("corrupt", "apply a noise model to a corpus and write the images");
    fs::path corrupt_in;
    fs::path corrupt_out;
    std::string corrupt_noise = "awgn:-5";
    std::uint64_t corrupt_seed = 1;
    corrupt_cmd->add_option("--corpus", corrupt_in, "clean corpus directory")->required();
    corrupt_cmd->add_option("--output", corrupt_out, "output directory")->required();
    corrupt_cmd->add_option("--noise", corrupt_noise, "awgn[:snr_db] | impulse[:p] | speckle[:M]");
    corrupt_cmd->add_option("--seed", corrupt_seed, "noise seed");

    // train / experiment
    auto* train_cmd = app.add_subcommand("train", "train one preset on one fold and save its checkpoint");
    Overrides train_o;
    add_experiment_flags(train_cmd, train_o);
    auto* experiment_cmd = app.add_subcommand("experiment", "every preset on every fold, with reports");
    Overrides experiment_o;
    add_experiment_flags(experiment_cmd, experiment_o);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "PSNR of a checkpoint on a corrupted corpus");
    fs::path eval_ckpt;
    fs::path eval_corpus;
    std::optional<fs::path> eval_out;
    std::string eval_noise = "awgn:-5";
    std::uint64_t eval_seed = 1;
    bool eval_no_clip = false;
    eval_cmd->add_option("--checkpoint", eval_ckpt, "checkpoint file")->required();
    eval_cmd->add_option("--corpus", eval_corpus, "clean image directory (any resolution)")->required();
    eval_cmd->add_option("--noise", eval_noise, "awgn[:snr_db] | impulse[:p] | speckle[:M]");
    eval_cmd->add_option("--seed", eval_seed, "noise seed");
    eval_cmd->add_option("--output", eval_out, "write restored images here");
    eval_cmd->add_flag("--no-clip", eval_no_clip, "feed unclamped corrupted values to the network");

    // gradcheck
    auto* grad_cmd = app.add_subcommand("gradcheck", "backpropagation against central differences");
    std::string grad_preset = "SelfONN-3";
    bool grad_shrink = false;
    std::size_t grad_size = 8;
    std::size_t grad_instances = 1;
    std::uint64_t grad_seed = 1;
    double grad_h = 1e-4;
    double grad_tol = 1e-6;
    grad_cmd->add_option("--preset", grad_preset, "preset name");
    grad_cmd->add_flag("--shrink", grad_shrink, "use (2, 3) hidden neurons and a 3x3 kernel");
    grad_cmd->add_option("--size", grad_size, "input side in pixels");
    grad_cmd->add_option("--instances", grad_instances, "random instances");
    grad_cmd->add_option("--seed", grad_seed, "seed");
    grad_cmd->add_option("--step", grad_h, "finite-difference step h");
    grad_cmd->add_option("--tol", grad_tol, "relative error tolerance");

    // params / macs
    auto* params_cmd = app.add_subcommand("params", "learnable parameter count of a preset");
    std::string params_preset;
    std::size_t params_kernel = 0;
    params_cmd->add_option("--preset", params_preset, "preset name")->required();
    params_cmd->add_option("--kernel", params_kernel, "override the kernel size");
    auto* macs_cmd = app.add_subcommand("macs", "multiply-accumulate count of a preset");
    std::string macs_preset;
    std::uint64_t macs_pixels = 3'600'000;
    std::size_t macs_kernel = 0;
    macs_cmd->add_option("--preset", macs_preset, "preset name")->required();
    macs_cmd->add_option("--pixels", macs_pixels, "total input pixels");
    macs_cmd->add_option("--kernel", macs_kernel, "override the kernel size");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        std::cout << app.help();
        return 0;
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n\n" << app.help();
        return 2;
    }

    try {
        if (ingest_cmd->parsed()) {
            const auto entries = ingest(ingest_in, ingest_out, ingest_size);
            std::size_t ok = 0;
            for (const auto& e : entries) {
                ok += e.ok ? 1 : 0;
            }
            std::cout << ok << " patches written, " << entries.size() - ok << " skipped\n";
            return 0;
        }
        if (synth_cmd->parsed()) {
            write_corpus(synthesize_corpus(synth_count, synth_size, synth_seed), synth_out);
            std::cout << synth_count << " patches written\n";
            return 0;
        }
        if (corrupt_cmd->parsed()) {
            const Corpus clean = load_corpus(corrupt_in);
            const NoiseSpec noise = NoiseSpec::parse(corrupt_noise);
            Corpus noisy{corrupt_corpus(clean, noise, corrupt_seed), clean.names};
            write_corpus(noisy, corrupt_out);
            std::cout << noisy.size() << " images corrupted with " << noise.str() << '\n';
            return 0;
        }
        if (train_cmd->parsed()) {
            ExperimentConfig config = train_o.resolve();
            if (config.arch_preset.size() != 1) {
                throw std::invalid_argument("train takes exactly one preset");
            }
            if (config.fold_limit == 0) {
                config.fold_limit = 1;
            }
            const ResultsTable table = run_experiment(config);
            print_summary(table);
            return failed_folds(table) == 0 ? 0 : 1;
        }
        if (experiment_cmd->parsed()) {
            const ResultsTable table = run_experiment(experiment_o.resolve());
            print_summary(table);
            return 0;
        }
        if (eval_cmd->parsed()) {
            const Network net = load_checkpoint(eval_ckpt);
            const Corpus clean = load_corpus(eval_corpus);
            const NoiseSpec noise = NoiseSpec::parse(eval_noise);
            const auto noisy = corrupt_corpus(clean, noise, eval_seed);
            double before = 0.0;
            double after = 0.0;
            for (std::size_t i = 0; i < clean.size(); ++i) {
                const Tensor restored = restore(net, noisy[i], !eval_no_clip);
                before += psnr(clean.images[i], noisy[i]);
                after += psnr(clean.images[i], restored);
                if (eval_out) {
                    fs::create_directories(*eval_out);
                    write_pgm(*eval_out / (fs::path(clean.names[i]).stem().string() + "_restored.pgm"),
                              to_image8(restored));
                }
            }
            const auto n = static_cast<double>(clean.size());
            std::cout << net.spec().name << "  " << noise.str() << "  images " << clean.size() << "  input "
                      << format_number(before / n, 4) << " dB  restored " << format_number(after / n, 4) << " dB\n";
            return 0;
        }
        if (grad_cmd->parsed()) {
            ArchitectureSpec spec = preset(grad_preset);
            if (grad_shrink) {
                spec = shrink(spec);
            }
            double worst = 0.0;
            for (std::size_t k = 0; k < grad_instances; ++k) {
                Rng rng(substream_seed(grad_seed, k));
                const Network net = build_network(spec, rng.next_u64());
                Tensor input({1, 1, grad_size, grad_size});
                Tensor target({1, 1, grad_size, grad_size});
                for (double& v : input.data()) {
                    v = rng.uniform(-0.9, 0.9);
                }
                for (double& v : target.data()) {
                    v = rng.uniform(-0.9, 0.9);
                }
                const GradCheckReport report = grad_check(net, input, target, grad_h, grad_tol);
                for (const auto& g : report.groups) {
                    std::cout << "instance " << k << "  " << g.name << "  n=" << g.count << "  max rel error "
                              << g.max_rel_error << '\n';
                }
                worst = std::max(worst, report.max_rel_error);
            }
            std::cout << spec.name << " max relative error " << worst << " (tolerance " << grad_tol << ")\n";
            return worst < grad_tol ? 0 : 1;
        }
        if (params_cmd->parsed()) {
            ArchitectureSpec spec = preset(params_preset);
            if (params_kernel != 0) {
                spec.kernel = params_kernel;
            }
            std::cout << count_params(spec) << '\n';
            return 0;
        }
        if (macs_cmd->parsed()) {
            ArchitectureSpec spec = preset(macs_preset);
            if (macs_kernel != 0) {
                spec.kernel = macs_kernel;
            }
            const std::uint64_t macs = count_macs(spec, macs_pixels);
            std::printf("%.2f G (%llu)\n", static_cast<double>(macs) / 1e9, static_cast<unsigned long long>(macs));
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
