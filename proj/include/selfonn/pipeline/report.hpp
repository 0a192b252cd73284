#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "selfonn/pipeline/experiment.hpp"

namespace selfonn::pipeline {

/// Total MACs (in G) divided by mean PSNR (dB).
[[nodiscard]] double macs_per_db(double macs_g, double mean_psnr_db);

struct MacRow {
    std::string model;
    std::size_t params = 0;
    std::uint64_t macs = 0;
    double mean_psnr = 0.0;  // NaN when unknown
};

// CSV writers. Column order:
//   summary: model,noise,params,folds_ok,folds_failed,mean_test_psnr_db,mean_train_psnr_db
//   curves:  model,fold,epoch,train_loss,train_psnr_db,test_psnr_db
//   folds:   model,fold,train_count,test_count,status,initial_test_psnr_db,final_train_psnr_db,final_test_psnr_db
//   macs:    model,params,macs,macs_g,mean_test_psnr_db,macs_per_db_g
void write_summary_csv(const ResultsTable& results, std::ostream& out);
void write_curves_csv(const ResultsTable& results, std::ostream& out);
void write_folds_csv(const ResultsTable& results, std::ostream& out);
void write_macs_csv(const std::vector<MacRow>& rows, std::ostream& out);

[[nodiscard]] std::vector<MacRow> mac_rows(const ResultsTable& results, const ExperimentConfig& config,
                                           std::uint64_t pixels);

/// summary.csv, curves.csv, folds.csv, macs.csv and metadata.txt (the only
/// file carrying a timestamp).
void write_report(const ResultsTable& results, const ExperimentConfig& config, const std::filesystem::path& dir,
                  std::uint64_t mac_pixels = 3'600'000);

/// Fixed-point formatting used by every CSV.
[[nodiscard]] std::string format_number(double value, int decimals = 6);

}  // namespace selfonn::pipeline
