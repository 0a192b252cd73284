#include "selfonn/pipeline/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "selfonn/network.hpp"

namespace selfonn::pipeline {

namespace {

std::string trim(std::string_view s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string_view::npos) {
        return {};
    }
    const auto last = s.find_last_not_of(" \t\r");
    return std::string(s.substr(first, last - first + 1));
}

std::size_t parse_count(std::string_view key, const std::string& value) {
    std::size_t used = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size() || value.front() == '-') {
        throw std::invalid_argument("config key '" + std::string(key) + "' expects a non-negative integer, got '" +
                                    value + "'");
    }
    return static_cast<std::size_t>(v);
}

double parse_real(std::string_view key, const std::string& value) {
    std::size_t used = 0;
    double v = 0.0;
    try {
        v = std::stod(value, &used);
    } catch (const std::exception&) {
        used = 0;
    }
    if (used == 0 || used != value.size()) {
        throw std::invalid_argument("config key '" + std::string(key) + "' expects a number, got '" + value + "'");
    }
    return v;
}

}  // namespace

void ExperimentConfig::validate() const {
    if (arch_preset.empty()) {
        throw std::invalid_argument("config needs at least one arch_preset");
    }
    for (const auto& name : arch_preset) {
        (void)preset(name);
    }
    noise.validate();
    if (folds == 0) {
        throw std::invalid_argument("folds must be positive");
    }
    if (batch_size == 0) {
        throw std::invalid_argument("batch_size must be positive");
    }
    if (eval_stride == 0) {
        throw std::invalid_argument("eval_stride must be positive");
    }
    if (kernel != 0 && kernel % 2 == 0) {
        throw std::invalid_argument("kernel must be odd");
    }
    if (!(learning_rate >= 0.0) || !(momentum >= 0.0) || momentum >= 1.0) {
        throw std::invalid_argument("need learning_rate >= 0 and 0 <= momentum < 1");
    }
}

void apply_setting(ExperimentConfig& config, std::string_view raw_key, std::string_view raw_value) {
    const std::string key = trim(raw_key);
    const std::string value = trim(raw_value);
    if (key == "arch_preset") {
        config.arch_preset.clear();
        std::istringstream in(value);
        std::string item;
        while (std::getline(in, item, ',')) {
            item = trim(item);
            if (!item.empty()) {
                config.arch_preset.push_back(item);
            }
        }
    } else if (key == "noise") {
        config.noise = NoiseSpec::parse(value);
    } else if (key == "epochs") {
        config.epochs = parse_count(key, value);
    } else if (key == "folds") {
        config.folds = parse_count(key, value);
    } else if (key == "fold_limit") {
        config.fold_limit = parse_count(key, value);
    } else if (key == "batch_size") {
        config.batch_size = parse_count(key, value);
    } else if (key == "eval_stride") {
        config.eval_stride = parse_count(key, value);
    } else if (key == "kernel") {
        config.kernel = parse_count(key, value);
    } else if (key == "seed") {
        config.seed = parse_count(key, value);
    } else if (key == "learning_rate") {
        config.learning_rate = parse_real(key, value);
    } else if (key == "momentum") {
        config.momentum = parse_real(key, value);
    } else if (key == "clip_input") {
        if (value == "true" || value == "1" || value == "yes") {
            config.clip_input = true;
        } else if (value == "false" || value == "0" || value == "no") {
            config.clip_input = false;
        } else {
            throw std::invalid_argument("config key 'clip_input' expects true or false, got '" + value + "'");
        }
    } else if (key == "clean_corpus_dir") {
        config.clean_corpus_dir = value;
    } else if (key == "output_dir") {
        config.output_dir = value;
    } else {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
}

void parse_config(std::istream& in, ExperimentConfig& config) {
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (const auto hash = line.find('#'); hash != std::string::npos) {
            line.erase(hash);
        }
        if (trim(line).empty()) {
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": expected key = value");
        }
        try {
            apply_setting(config, std::string_view(line).substr(0, eq), std::string_view(line).substr(eq + 1));
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("config line " + std::to_string(line_no) + ": " + e.what());
        }
    }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path.string());
    }
    ExperimentConfig config;
    parse_config(in, config);
    return config;
}

std::string to_config_text(const ExperimentConfig& c) {
    std::ostringstream out;
    out.precision(17);
    out << "arch_preset = ";
    for (std::size_t i = 0; i < c.arch_preset.size(); ++i) {
        out << (i ? "," : "") << c.arch_preset[i];
    }
    out << "\nnoise = " << c.noise.str() << "\nepochs = " << c.epochs << "\nfolds = " << c.folds
        << "\nfold_limit = " << c.fold_limit << "\nbatch_size = " << c.batch_size
        << "\neval_stride = " << c.eval_stride << "\nkernel = " << c.kernel << "\nseed = " << c.seed
        << "\nlearning_rate = " << c.learning_rate << "\nmomentum = " << c.momentum
        << "\nclip_input = " << (c.clip_input ? "true" : "false")
        << "\nclean_corpus_dir = " << c.clean_corpus_dir.string() << "\noutput_dir = " << c.output_dir.string()
        << '\n';
    return out.str();
}

std::size_t threads_from_env() {
    const char* raw = std::getenv("SELFONN_THREADS");
    if (raw == nullptr || *raw == '\0') {
        return 1;
    }
    try {
        const std::size_t n = parse_count("SELFONN_THREADS", raw);
        return n == 0 ? 1 : n;
    } catch (const std::invalid_argument&) {
        return 1;
    }
}

}  // namespace selfonn::pipeline
