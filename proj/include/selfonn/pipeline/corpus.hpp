#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "selfonn/tensor.hpp"

namespace selfonn::pipeline {

/// Clean grayscale images in [0, 1], each 1x1xHxW.
struct Corpus {
    std::vector<Tensor> images;
    std::vector<std::string> names;

    [[nodiscard]] std::size_t size() const noexcept { return images.size(); }
};

struct ManifestEntry {
    std::size_t index = 0;   // patch index, meaningful only when ok
    std::string source;
    bool ok = false;
    std::string note;
};

/// Converts every readable image in `input_dir` (sorted by filename) to a
/// `size` x `size` gray patch and writes patch_NNNNN.pgm plus manifest.csv to
/// `output_dir`. Unreadable files are skipped and recorded in the manifest.
std::vector<ManifestEntry> ingest(const std::filesystem::path& input_dir, const std::filesystem::path& output_dir,
                                  std::size_t size = 60);

/// Loads the patches listed in manifest.csv, or every .pgm/.png in the
/// directory (sorted) when there is no manifest. Images keep their resolution.
[[nodiscard]] Corpus load_corpus(const std::filesystem::path& dir);

/// Writes images as patch_NNNNN.pgm with a manifest.
void write_corpus(const Corpus& corpus, const std::filesystem::path& dir);

/// Seeded piecewise-smooth test patterns: a shaded background with
/// overlapping discs, rectangles and stripes.
[[nodiscard]] Corpus synthesize_corpus(std::size_t count, std::size_t size, std::uint64_t seed);

}  // namespace selfonn::pipeline
