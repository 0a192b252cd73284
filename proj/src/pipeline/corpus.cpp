#include "selfonn/pipeline/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "selfonn/pipeline/image_io.hpp"
#include "selfonn/random.hpp"

namespace selfonn::pipeline {

namespace fs = std::filesystem;

namespace {

std::string patch_name(std::size_t index) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "patch_%05zu.pgm", index);
    return buf;
}

// Manifest fields never contain commas except possibly the note and source,
// which are quoted.
std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) {
        return s;
    }
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') {
            out += '"';
        }
        out += c;
    }
    return out + "\"";
}

std::vector<std::string> csv_split(const std::string& line) {
    std::vector<std::string> fields;
    std::string cur;
    bool quoted = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
        const char c = line[i];
        if (quoted) {
            if (c == '"' && i + 1 < line.size() && line[i + 1] == '"') {
                cur += '"';
                ++i;
            } else if (c == '"') {
                quoted = false;
            } else {
                cur += c;
            }
        } else if (c == '"') {
            quoted = true;
        } else if (c == ',') {
            fields.push_back(std::move(cur));
            cur.clear();
        } else if (c != '\r') {
            cur += c;
        }
    }
    fields.push_back(std::move(cur));
    return fields;
}

void write_manifest(const fs::path& dir, const std::vector<ManifestEntry>& entries) {
    std::ofstream out(dir / "manifest.csv");
    if (!out) {
        throw std::runtime_error("cannot write manifest in " + dir.string());
    }
    out << "index,file,source,status,note\n";
    for (const auto& e : entries) {
        out << (e.ok ? std::to_string(e.index) : std::string()) << ',' << (e.ok ? patch_name(e.index) : "") << ','
            << csv_quote(e.source) << ',' << (e.ok ? "ok" : "skipped") << ',' << csv_quote(e.note) << '\n';
    }
}

bool is_image_file(const fs::path& p) {
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm" || ext == ".png";
}

std::vector<fs::path> sorted_files(const fs::path& dir) {
    if (!fs::is_directory(dir)) {
        throw std::runtime_error("not a directory: " + dir.string());
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    return files;
}

}  // namespace

std::vector<ManifestEntry> ingest(const fs::path& input_dir, const fs::path& output_dir, std::size_t size) {
    if (size == 0) {
        throw std::invalid_argument("ingest: target size must be positive");
    }
    fs::create_directories(output_dir);
    std::vector<ManifestEntry> entries;
    std::size_t next = 0;
    for (const auto& file : sorted_files(input_dir)) {
        if (file.filename() == "manifest.csv") {
            continue;
        }
        ManifestEntry entry;
        entry.source = file.filename().string();
        try {
            const Image8 img = read_image(file);
            const Tensor gray = resize_bilinear(to_gray_tensor(img), size, size);
            write_pgm(output_dir / patch_name(next), to_image8(gray));
            entry.ok = true;
            entry.index = next++;
        } catch (const std::exception& e) {
            entry.note = e.what();
            std::cerr << "warning: skipping " << file.string() << ": " << e.what() << '\n';
        }
        entries.push_back(std::move(entry));
    }
    write_manifest(output_dir, entries);
    return entries;
}

Corpus load_corpus(const fs::path& dir) {
    Corpus corpus;
    const fs::path manifest = dir / "manifest.csv";
    if (fs::exists(manifest)) {
        std::ifstream in(manifest);
        std::string line;
        std::getline(in, line);  // header
        while (std::getline(in, line)) {
            if (line.empty()) {
                continue;
            }
            const auto fields = csv_split(line);
            if (fields.size() < 4) {
                throw std::runtime_error("malformed manifest line: " + line);
            }
            if (fields[3] != "ok") {
                continue;
            }
            corpus.images.push_back(to_gray_tensor(read_image(dir / fields[1])));
            corpus.names.push_back(fields[1]);
        }
        return corpus;
    }
    for (const auto& file : sorted_files(dir)) {
        if (!is_image_file(file)) {
            continue;
        }
        corpus.images.push_back(to_gray_tensor(read_image(file)));
        corpus.names.push_back(file.filename().string());
    }
    return corpus;
}

void write_corpus(const Corpus& corpus, const fs::path& dir) {
    fs::create_directories(dir);
    std::vector<ManifestEntry> entries;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        write_pgm(dir / patch_name(i), to_image8(corpus.images[i]));
        ManifestEntry e;
        e.index = i;
        e.ok = true;
        e.source = i < corpus.names.size() ? corpus.names[i] : patch_name(i);
        entries.push_back(std::move(e));
    }
    write_manifest(dir, entries);
}

Corpus synthesize_corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
    if (size == 0) {
        throw std::invalid_argument("synthesize_corpus: size must be positive");
    }
    Corpus corpus;
    const double n = static_cast<double>(size);
    for (std::size_t i = 0; i < count; ++i) {
        Rng rng = Rng::substream(seed, i);
        std::vector<double> px(size * size);

        const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
        const double base = rng.uniform(0.25, 0.75);
        const double slope = rng.uniform(-0.35, 0.35);
        for (std::size_t y = 0; y < size; ++y) {
            for (std::size_t x = 0; x < size; ++x) {
                const double t = ((static_cast<double>(x) - n / 2) * std::cos(theta) +
                                  (static_cast<double>(y) - n / 2) * std::sin(theta)) / n;
                px[y * size + x] = base + slope * t;
            }
        }

        const std::size_t shapes = 4 + rng.below(6);
        for (std::size_t s = 0; s < shapes; ++s) {
            const double level = rng.uniform(0.05, 0.95);
            const double cx = rng.uniform(0.0, n);
            const double cy = rng.uniform(0.0, n);
            const std::uint64_t type = rng.below(3);
            const double r = rng.uniform(0.08, 0.3) * n;
            const double hw = rng.uniform(0.06, 0.3) * n;
            const double hh = rng.uniform(0.06, 0.3) * n;
            const double angle = rng.uniform(0.0, std::numbers::pi);
            const double period = rng.uniform(4.0, 12.0);
            for (std::size_t y = 0; y < size; ++y) {
                for (std::size_t x = 0; x < size; ++x) {
                    const double dx = static_cast<double>(x) + 0.5 - cx;
                    const double dy = static_cast<double>(y) + 0.5 - cy;
                    // Signed distance to the shape boundary (negative inside).
                    double dist = 0.0;
                    if (type == 0 || type == 2) {
                        dist = std::hypot(dx, dy) - r;
                    } else {
                        const double u = std::abs(dx * std::cos(angle) + dy * std::sin(angle)) - hw;
                        const double v = std::abs(-dx * std::sin(angle) + dy * std::cos(angle)) - hh;
                        dist = std::max(u, v);
                    }
                    const double coverage = std::clamp(0.5 - dist, 0.0, 1.0);
                    if (coverage <= 0.0) {
                        continue;
                    }
                    double value = level;
                    if (type == 2) {
                        const double phase = (dx * std::cos(angle) + dy * std::sin(angle)) / period;
                        value = level + 0.25 * std::sin(2.0 * std::numbers::pi * phase);
                    }
                    double& p = px[y * size + x];
                    p = (1.0 - coverage) * p + coverage * value;
                }
            }
        }
        for (double& p : px) {
            p = std::clamp(p, 0.0, 1.0);
        }
        corpus.images.emplace_back(Shape{1, 1, size, size}, std::move(px));
        corpus.names.push_back("synthetic_" + std::to_string(i));
    }
    return corpus;
}

}  // namespace selfonn::pipeline
