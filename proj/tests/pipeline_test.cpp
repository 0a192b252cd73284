#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "selfonn/pipeline/config.hpp"
#include "selfonn/pipeline/corpus.hpp"
#include "selfonn/pipeline/experiment.hpp"
#include "selfonn/pipeline/image_io.hpp"
#include "selfonn/pipeline/report.hpp"
#include "support.hpp"

using namespace selfonn;
using namespace selfonn::pipeline;
namespace fs = std::filesystem;

namespace {

class TempDir {
  public:
    explicit TempDir(const std::string& tag) : path_(fs::temp_directory_path() / ("selfonn_" + tag)) {
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() { fs::remove_all(path_); }
    [[nodiscard]] const fs::path& path() const { return path_; }

  private:
    fs::path path_;
};

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream s;
    s << in.rdbuf();
    return s.str();
}

std::string first_line(const std::string& text) { return text.substr(0, text.find('\n')); }

std::size_t line_count(const std::string& text) { return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n')); }

Image8 gray(std::size_t w, std::size_t h, std::uint8_t fill) {
    return Image8{w, h, 1, std::vector<std::uint8_t>(w * h, fill)};
}

ExperimentConfig tiny_config() {
    ExperimentConfig c;
    c.arch_preset = {"CNN-1"};
    c.kernel = 3;
    c.epochs = 2;
    c.folds = 2;
    c.batch_size = 2;
    c.seed = 5;
    return c;
}

}  // namespace

TEST(Config, DefaultsAndParsing) {
    ExperimentConfig c;
    EXPECT_EQ(c.epochs, 100u);
    EXPECT_EQ(c.folds, 10u);
    EXPECT_EQ(c.batch_size, 10u);
    EXPECT_DOUBLE_EQ(c.learning_rate, 0.01);
    EXPECT_DOUBLE_EQ(c.momentum, 0.9);
    std::istringstream in(
        "# comment\n"
        "arch_preset = CNN-1, SelfONN-5\n"
        "noise = impulse:0.3   # trailing\n"
        "epochs = 7\n"
        "\n"
        "clip_input = false\n"
        "learning_rate = 0.05\n");
    parse_config(in, c);
    EXPECT_EQ(c.arch_preset, (std::vector<std::string>{"CNN-1", "SelfONN-5"}));
    EXPECT_EQ(c.noise.kind, NoiseKind::impulse);
    EXPECT_DOUBLE_EQ(c.noise.p, 0.3);
    EXPECT_EQ(c.epochs, 7u);
    EXPECT_FALSE(c.clip_input);
    EXPECT_DOUBLE_EQ(c.learning_rate, 0.05);
}

TEST(Config, RejectsBadInput) {
    ExperimentConfig c;
    EXPECT_THROW(apply_setting(c, "colour", "1"), std::invalid_argument);
    EXPECT_THROW(apply_setting(c, "epochs", "-3"), std::invalid_argument);
    EXPECT_THROW(apply_setting(c, "epochs", "ten"), std::invalid_argument);
    EXPECT_THROW(apply_setting(c, "clip_input", "maybe"), std::invalid_argument);
    apply_setting(c, "arch_preset", "CNN-2");
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ExperimentConfig{};
    std::istringstream no_equals("epochs 5\n");
    EXPECT_THROW(parse_config(no_equals, c), std::invalid_argument);
    c = ExperimentConfig{};
    c.momentum = 1.0;
    EXPECT_THROW(c.validate(), std::invalid_argument);
    c = ExperimentConfig{};
    c.kernel = 4;
    EXPECT_THROW(c.validate(), std::invalid_argument);
}

TEST(Config, TextRoundTrip) {
    ExperimentConfig c;
    c.arch_preset = {"SelfONN-7", "CNN-7"};
    c.noise = NoiseSpec::parse("speckle:3");
    c.epochs = 11;
    c.fold_limit = 2;
    c.seed = 1234567890123ULL;
    c.learning_rate = 0.0025;
    c.clip_input = false;
    c.output_dir = "/tmp/out";
    std::istringstream in(to_config_text(c));
    ExperimentConfig back;
    parse_config(in, back);
    EXPECT_EQ(to_config_text(back), to_config_text(c));
    EXPECT_EQ(back.arch_preset, c.arch_preset);
    EXPECT_EQ(back.seed, c.seed);
    EXPECT_EQ(back.learning_rate, c.learning_rate);
    EXPECT_EQ(back.output_dir, c.output_dir);
    EXPECT_FALSE(back.clip_input);
}

TEST(ImageIo, PgmRoundTrip) {
    TempDir dir("pgm");
    Image8 img{3, 2, 1, {0, 10, 20, 30, 40, 255}};
    write_pgm(dir.path() / "a.pgm", img);
    const Image8 back = read_image(dir.path() / "a.pgm");
    EXPECT_EQ(back.width, 3u);
    EXPECT_EQ(back.height, 2u);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(ImageIo, PgmWithSmallMaxvalIsRescaled) {
    TempDir dir("pgm15");
    {
        std::ofstream out(dir.path() / "b.pgm", std::ios::binary);
        out << "P5\n# c\n2 1\n15\n";
        out.put(static_cast<char>(0));
        out.put(static_cast<char>(15));
    }
    const Image8 img = read_pgm(dir.path() / "b.pgm");
    EXPECT_EQ(img.pixels, (std::vector<std::uint8_t>{0, 255}));
}

TEST(ImageIo, PngRoundTrip) {
    TempDir dir("png");
    Image8 img = gray(4, 3, 0);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        img.pixels[i] = static_cast<std::uint8_t>(i * 20);
    }
    write_png(dir.path() / "a.png", img);
    const Image8 back = read_image(dir.path() / "a.png");
    EXPECT_EQ(back.channels, 1u);
    EXPECT_EQ(back.pixels, img.pixels);
}

TEST(ImageIo, RejectsGarbage) {
    TempDir dir("junk");
    {
        std::ofstream out(dir.path() / "x.pgm");
        out << "hello";
    }
    EXPECT_THROW((void)read_image(dir.path() / "x.pgm"), std::runtime_error);
    EXPECT_THROW((void)read_image(dir.path() / "missing.png"), std::runtime_error);
}

TEST(Gray, LumaWeights) {
    const Image8 rgb{1, 1, 3, {128, 128, 128}};
    EXPECT_NEAR(to_gray_tensor(rgb).data()[0], 128.0 / 255.0, 1e-12);
    const Image8 red{1, 1, 4, {255, 0, 0, 7}};
    EXPECT_NEAR(to_gray_tensor(red).data()[0], 0.299, 1e-12);
    const Image8 ga{1, 1, 2, {51, 0}};
    EXPECT_NEAR(to_gray_tensor(ga).data()[0], 0.2, 1e-12);
    EXPECT_EQ(to_image8(Tensor({1, 1, 1, 3}, std::vector<double>{-0.5, 0.5, 2.0})).pixels,
              (std::vector<std::uint8_t>{0, 128, 255}));
}

TEST(Resize, HalvingAveragesBlocks) {
    Rng rng(1);
    const Tensor t = selfonn::testing::random_tensor({1, 1, 8, 6}, rng, 0.0, 1.0);
    const Tensor r = resize_bilinear(t, 4, 3);
    for (std::size_t y = 0; y < 4; ++y) {
        for (std::size_t x = 0; x < 3; ++x) {
            const double block = (t(0, 0, 2 * y, 2 * x) + t(0, 0, 2 * y + 1, 2 * x) + t(0, 0, 2 * y, 2 * x + 1) +
                                  t(0, 0, 2 * y + 1, 2 * x + 1)) /
                                 4.0;
            EXPECT_NEAR(r(0, 0, y, x), block, 1e-14);
        }
    }
}

TEST(Resize, CheckerboardAndIdentity) {
    Tensor c({1, 1, 6, 6});
    for (std::size_t y = 0; y < 6; ++y) {
        for (std::size_t x = 0; x < 6; ++x) {
            c(0, 0, y, x) = static_cast<double>((x + y) % 2);
        }
    }
    const Tensor half = resize_bilinear(c, 3, 3);
    for (double v : half.data()) {
        EXPECT_NEAR(v, 0.5, 1e-14);
    }
    EXPECT_EQ(resize_bilinear(c, 6, 6).values(), c.values());
    const Tensor flat({1, 1, 5, 7}, 0.3);
    const Tensor stretched = resize_bilinear(flat, 13, 2);
    for (double v : stretched.data()) {
        EXPECT_NEAR(v, 0.3, 1e-15);
    }
}

TEST(Ingest, PassThroughResizeAndSkips) {
    TempDir in("ingest_in");
    TempDir out("ingest_out");
    Image8 patch = gray(60, 60, 0);
    for (std::size_t i = 0; i < patch.pixels.size(); ++i) {
        patch.pixels[i] = static_cast<std::uint8_t>((i * 7) % 256);
    }
    write_pgm(in.path() / "a.pgm", patch);
    write_png(in.path() / "b.png", gray(120, 90, 200));
    {
        std::ofstream bad(in.path() / "c.png");
        bad << "not an image";
    }
    const auto entries = ingest(in.path(), out.path(), 60);
    ASSERT_EQ(entries.size(), 3u);
    EXPECT_TRUE(entries[0].ok);
    EXPECT_TRUE(entries[1].ok);
    EXPECT_FALSE(entries[2].ok);
    EXPECT_FALSE(entries[2].note.empty());
    const std::string manifest = read_text(out.path() / "manifest.csv");
    EXPECT_EQ(first_line(manifest), "index,file,source,status,note");
    EXPECT_NE(manifest.find("skipped"), std::string::npos);

    const Corpus corpus = load_corpus(out.path());
    ASSERT_EQ(corpus.size(), 2u);
    EXPECT_EQ(to_image8(corpus.images[0]).pixels, patch.pixels);
    EXPECT_EQ(corpus.images[1].shape(), (Shape{1, 1, 60, 60}));
    for (double v : corpus.images[1].data()) {
        EXPECT_NEAR(v, 200.0 / 255.0, 1e-12);
    }
}

TEST(Synthesize, DeterministicAndInRange) {
    const Corpus a = synthesize_corpus(6, 20, 3);
    const Corpus b = synthesize_corpus(6, 20, 3);
    const Corpus c = synthesize_corpus(6, 20, 4);
    ASSERT_EQ(a.size(), 6u);
    for (std::size_t i = 0; i < 6; ++i) {
        EXPECT_EQ(a.images[i].values(), b.images[i].values());
        EXPECT_NE(a.images[i].values(), c.images[i].values());
        EXPECT_GT(variance(a.images[i].data()), 0.0);
        for (double v : a.images[i].data()) {
            EXPECT_GE(v, 0.0);
            EXPECT_LE(v, 1.0);
        }
    }
    TempDir dir("synth");
    write_corpus(a, dir.path());
    const Corpus back = load_corpus(dir.path());
    ASSERT_EQ(back.size(), 6u);
    EXPECT_LE(max_abs_difference(back.images[2], a.images[2]), 0.5 / 255.0 + 1e-12);
}

TEST(Experiment, CorruptionIsPerImage) {
    const Corpus corpus = synthesize_corpus(5, 12, 1);
    const auto all = corrupt_corpus(corpus, NoiseSpec{}, 9);
    Corpus first;
    first.images = {corpus.images[0], corpus.images[1]};
    const auto part = corrupt_corpus(first, NoiseSpec{}, 9);
    EXPECT_EQ(part[1].values(), all[1].values());
}

TEST(Experiment, NetworkInputClipping) {
    const Tensor x({1, 1, 1, 3}, std::vector<double>{-0.5, 0.25, 1.5});
    EXPECT_EQ(network_input(x, true).values(), (std::vector<double>{-1.0, -0.5, 1.0}));
    EXPECT_EQ(network_input(x, false).values(), (std::vector<double>{-2.0, -0.5, 2.0}));
}

TEST(Experiment, ZeroEpochsReportsInitialModel) {
    ExperimentConfig c = tiny_config();
    c.epochs = 0;
    const Corpus corpus = synthesize_corpus(4, 10, 2);
    const ResultsTable t = run_experiment(c, corpus);
    ASSERT_EQ(t.folds.size(), 2u);
    for (const auto& f : t.folds) {
        EXPECT_FALSE(f.failed);
        EXPECT_TRUE(f.curve.empty());
        EXPECT_EQ(f.final_test_psnr, f.initial_test_psnr);
    }
}

TEST(Experiment, TrainsOnFoldAndTestsOnComplement) {
    ExperimentConfig c = tiny_config();
    c.folds = 3;
    const Corpus corpus = synthesize_corpus(9, 10, 2);
    const ResultsTable t = run_experiment(c, corpus);
    ASSERT_EQ(t.folds.size(), 3u);
    for (const auto& f : t.folds) {
        EXPECT_EQ(f.train_count, 3u);
        EXPECT_EQ(f.test_count, 6u);
        ASSERT_EQ(f.curve.size(), 2u);
        EXPECT_EQ(f.curve.back().epoch, 2u);
    }
    c.fold_limit = 1;
    EXPECT_EQ(run_experiment(c, corpus).folds.size(), 1u);
}

TEST(Experiment, DivergentFoldIsFlagged) {
    // A linear network at an oversized step; tanh would saturate instead.
    ExperimentConfig c = tiny_config();
    c.learning_rate = 50.0;
    c.momentum = 0.0;
    c.epochs = 10000;
    c.eval_stride = 10000;
    Network net = build_network(resolve_model(c, "CNN-1"), 1);
    for (auto& l : net.layers()) {
        l.operators.activation = Activation::identity;
    }
    const Corpus corpus = synthesize_corpus(2, 8, 2);
    const auto noisy = corrupt_corpus(corpus, c.noise, 3);
    const std::span<const Tensor> clean(corpus.images);
    ResultsTable t;
    t.noise = c.noise.str();
    t.models = {"CNN-1"};
    t.params = {count_params(net)};
    t.folds.push_back(train_fold(net, c, std::span(noisy).first(1), clean.first(1), std::span(noisy).last(1),
                                 clean.last(1), 4));
    EXPECT_TRUE(t.folds[0].failed);
    EXPECT_FALSE(t.folds[0].error.empty());
    const auto s = t.summaries();
    ASSERT_EQ(s.size(), 1u);
    EXPECT_EQ(s[0].folds_failed, 1u);
    EXPECT_EQ(s[0].folds_ok, 0u);
    std::ostringstream folds;
    write_folds_csv(t, folds);
    EXPECT_NE(folds.str().find(",failed,"), std::string::npos);
}

TEST(Report, CsvsAreDeterministic) {
    ExperimentConfig c = tiny_config();
    c.arch_preset = {"CNN-1", "SelfONN-3"};
    const Corpus corpus = synthesize_corpus(4, 10, 2);
    TempDir a("report_a");
    TempDir b("report_b");
    write_report(run_experiment(c, corpus), c, a.path());
    c.threads = 2;
    write_report(run_experiment(c, corpus), c, b.path());
    for (const auto* name : {"summary.csv", "curves.csv", "folds.csv", "macs.csv"}) {
        EXPECT_EQ(read_text(a.path() / name), read_text(b.path() / name)) << name;
    }
    EXPECT_TRUE(fs::exists(a.path() / "metadata.txt"));
    const std::string curves = read_text(a.path() / "curves.csv");
    EXPECT_EQ(line_count(curves), 1u + 2u * 2u * 2u);
}

TEST(Report, ColumnHeadersAndEmptyTables) {
    const ResultsTable empty;
    std::ostringstream s;
    std::ostringstream cv;
    std::ostringstream f;
    std::ostringstream m;
    write_summary_csv(empty, s);
    write_curves_csv(empty, cv);
    write_folds_csv(empty, f);
    write_macs_csv({}, m);
    EXPECT_EQ(s.str(), "model,noise,params,folds_ok,folds_failed,mean_test_psnr_db,mean_train_psnr_db\n");
    EXPECT_EQ(cv.str(), "model,fold,epoch,train_loss,train_psnr_db,test_psnr_db\n");
    EXPECT_EQ(f.str(),
              "model,fold,train_count,test_count,status,initial_test_psnr_db,final_train_psnr_db,final_test_psnr_db\n");
    EXPECT_EQ(m.str(), "model,params,macs,macs_g,mean_test_psnr_db,macs_per_db_g\n");
}

TEST(Report, MacsPerDb) {
    EXPECT_DOUBLE_EQ(macs_per_db(40.0, 20.0), 2.0);
    EXPECT_THROW((void)macs_per_db(1.0, 0.0), std::invalid_argument);
    // A 67.66 G network at its implied mean of 33.86 dB.
    EXPECT_NEAR(macs_per_db(67.66, 67.66 / 1.998), 1.998, 1e-12);
    std::ostringstream out;
    write_macs_csv({MacRow{"X", 10, 40'000'000'000, 20.0}, MacRow{"Y", 1, 5, std::nan("")}}, out);
    EXPECT_NE(out.str().find("X,10,40000000000,40.0000,20.000000,2.0000"), std::string::npos);
    EXPECT_NE(out.str().find(",nan\n"), std::string::npos);
}

TEST(Report, FormatNumber) {
    EXPECT_EQ(format_number(1.5), "1.500000");
    EXPECT_EQ(format_number(-0.125, 2), "-0.12");
    EXPECT_EQ(format_number(std::nan("")), "nan");
}
