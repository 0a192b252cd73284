#include "selfonn/pipeline/report.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <stdexcept>

namespace selfonn::pipeline {

std::string format_number(double value, int decimals) {
    if (std::isnan(value)) {
        return "nan";
    }
    if (std::isinf(value)) {
        return value > 0 ? "inf" : "-inf";
    }
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, value);
    return buf;
}

double macs_per_db(double macs_g, double mean_psnr_db) {
    if (!(mean_psnr_db > 0.0)) {
        throw std::invalid_argument("macs_per_db: mean PSNR must be positive");
    }
    return macs_g / mean_psnr_db;
}

void write_summary_csv(const ResultsTable& results, std::ostream& out) {
    out << "model,noise,params,folds_ok,folds_failed,mean_test_psnr_db,mean_train_psnr_db\n";
    for (const auto& s : results.summaries()) {
        out << s.model << ',' << s.noise << ',' << s.params << ',' << s.folds_ok << ','
            << s.folds_failed << ',' << format_number(s.mean_test_psnr) << ',' << format_number(s.mean_train_psnr)
            << '\n';
    }
}

void write_curves_csv(const ResultsTable& results, std::ostream& out) {
    out << "model,fold,epoch,train_loss,train_psnr_db,test_psnr_db\n";
    for (const auto& f : results.folds) {
        for (const auto& e : f.curve) {
            out << f.model << ',' << f.fold << ',' << e.epoch << ',' << format_number(e.train_loss, 9) << ','
                << format_number(e.train_psnr) << ',' << format_number(e.test_psnr) << '\n';
        }
    }
}

void write_folds_csv(const ResultsTable& results, std::ostream& out) {
    out << "model,fold,train_count,test_count,status,initial_test_psnr_db,final_train_psnr_db,final_test_psnr_db\n";
    for (const auto& f : results.folds) {
        out << f.model << ',' << f.fold << ',' << f.train_count << ',' << f.test_count << ','
            << (f.failed ? "failed" : "ok") << ',' << format_number(f.initial_test_psnr) << ','
            << format_number(f.final_train_psnr) << ',' << format_number(f.final_test_psnr) << '\n';
    }
}

void write_macs_csv(const std::vector<MacRow>& rows, std::ostream& out) {
    out << "model,params,macs,macs_g,mean_test_psnr_db,macs_per_db_g\n";
    for (const auto& r : rows) {
        const double g = static_cast<double>(r.macs) / 1e9;
        const bool known = std::isfinite(r.mean_psnr) && r.mean_psnr > 0.0;
        out << r.model << ',' << r.params << ',' << r.macs << ',' << format_number(g, 4) << ','
            << format_number(r.mean_psnr) << ',' << (known ? format_number(macs_per_db(g, r.mean_psnr), 4) : "nan")
            << '\n';
    }
}

std::vector<MacRow> mac_rows(const ResultsTable& results, const ExperimentConfig& config, std::uint64_t pixels) {
    std::vector<MacRow> rows;
    for (const auto& s : results.summaries()) {
        const auto spec = resolve_model(config, s.model);
        rows.push_back({s.model, count_params(spec), count_macs(spec, pixels), s.mean_test_psnr});
    }
    return rows;
}

void write_report(const ResultsTable& results, const ExperimentConfig& config, const std::filesystem::path& dir,
                  std::uint64_t mac_pixels) {
    std::filesystem::create_directories(dir);
    auto open = [&](const char* name) {
        std::ofstream out(dir / name);
        if (!out) {
            throw std::runtime_error("cannot write " + (dir / name).string());
        }
        return out;
    };
    {
        auto out = open("summary.csv");
        write_summary_csv(results, out);
    }
    {
        auto out = open("curves.csv");
        write_curves_csv(results, out);
    }
    {
        auto out = open("folds.csv");
        write_folds_csv(results, out);
    }
    {
        auto out = open("macs.csv");
        write_macs_csv(mac_rows(results, config, mac_pixels), out);
    }
    {
        auto out = open("metadata.txt");
        const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        char stamp[64];
        std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
        out << "timestamp = " << stamp << '\n' << to_config_text(config);
    }
}

}  // namespace selfonn::pipeline
