#include "selfonn/pipeline/image_io.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>
#include <string>

namespace selfonn::pipeline {

namespace {

// Reads the next PGM header token, skipping whitespace and '#' comments.
std::string next_token(std::istream& in) {
    std::string token;
    int ch = in.get();
    while (ch != EOF) {
        if (ch == '#') {
            while (ch != EOF && ch != '\n') {
                ch = in.get();
            }
        } else if (std::isspace(ch)) {
            ch = in.get();
        } else {
            break;
        }
    }
    while (ch != EOF && !std::isspace(ch) && ch != '#') {
        token.push_back(static_cast<char>(ch));
        ch = in.get();
    }
    // The single whitespace after maxval is consumed here, as P5 requires.
    return token;
}

std::size_t header_number(std::istream& in, const std::filesystem::path& path) {
    const std::string token = next_token(in);
    if (token.empty() || !std::all_of(token.begin(), token.end(), [](char c) { return c >= '0' && c <= '9'; })) {
        throw std::runtime_error(path.string() + ": malformed PGM header");
    }
    return std::stoul(token);
}

}  // namespace

Image8 read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    if (next_token(in) != "P5") {
        throw std::runtime_error(path.string() + ": not a binary PGM (P5)");
    }
    Image8 img;
    img.width = header_number(in, path);
    img.height = header_number(in, path);
    const std::size_t maxval = header_number(in, path);
    if (img.width == 0 || img.height == 0) {
        throw std::runtime_error(path.string() + ": zero-size image");
    }
    if (maxval == 0 || maxval > 255) {
        throw std::runtime_error(path.string() + ": only 8-bit PGM (maxval <= 255) is supported");
    }
    img.channels = 1;
    img.pixels.resize(img.width * img.height);
    if (!in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()))) {
        throw std::runtime_error(path.string() + ": truncated pixel data");
    }
    if (maxval != 255) {
        for (auto& p : img.pixels) {
            if (p > maxval) {
                throw std::runtime_error(path.string() + ": sample exceeds maxval");
            }
            p = static_cast<std::uint8_t>(std::lround(255.0 * p / static_cast<double>(maxval)));
        }
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1) {
        throw std::invalid_argument("write_pgm: image must be single-channel");
    }
    if (image.pixels.size() != image.width * image.height) {
        throw std::invalid_argument("write_pgm: pixel buffer does not match dimensions");
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    out << "P5\n" << image.width << ' ' << image.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(image.pixels.data()), static_cast<std::streamsize>(image.pixels.size()));
    if (!out) {
        throw std::runtime_error("failed writing " + path.string());
    }
}

Image8 read_png(const std::filesystem::path& path) {
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&png, path.string().c_str()) == 0) {
        throw std::runtime_error(path.string() + ": " + png.message);
    }
    const bool gray = (png.format & PNG_FORMAT_FLAG_COLOR) == 0;
    png.format = gray ? PNG_FORMAT_GRAY : PNG_FORMAT_RGB;
    Image8 img;
    img.width = png.width;
    img.height = png.height;
    img.channels = gray ? 1 : 3;
    if (img.width == 0 || img.height == 0) {
        png_image_free(&png);
        throw std::runtime_error(path.string() + ": zero-size image");
    }
    img.pixels.resize(PNG_IMAGE_SIZE(png));
    if (png_image_finish_read(&png, nullptr, img.pixels.data(), 0, nullptr) == 0) {
        const std::string message = png.message;
        png_image_free(&png);
        throw std::runtime_error(path.string() + ": " + message);
    }
    return img;
}

void write_png(const std::filesystem::path& path, const Image8& image) {
    if (image.channels != 1) {
        throw std::invalid_argument("write_png: image must be single-channel");
    }
    png_image png;
    std::memset(&png, 0, sizeof png);
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    png.format = PNG_FORMAT_GRAY;
    if (png_image_write_to_file(&png, path.string().c_str(), 0, image.pixels.data(), 0, nullptr) == 0) {
        throw std::runtime_error(path.string() + ": " + png.message);
    }
}

Image8 read_image(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    unsigned char sig[8] = {};
    in.read(reinterpret_cast<char*>(sig), sizeof sig);
    const auto got = in.gcount();
    in.close();
    if (got >= 2 && sig[0] == 'P' && sig[1] == '5') {
        return read_pgm(path);
    }
    if (got == 8 && png_sig_cmp(sig, 0, 8) == 0) {
        return read_png(path);
    }
    throw std::runtime_error(path.string() + ": unsupported image format (expected PGM P5 or PNG)");
}

Tensor to_gray_tensor(const Image8& image) {
    const std::size_t n = image.width * image.height;
    if (image.pixels.size() != n * image.channels) {
        throw std::invalid_argument("to_gray_tensor: pixel buffer does not match dimensions");
    }
    std::vector<double> values(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::uint8_t* px = image.pixels.data() + i * image.channels;
        double luma = 0.0;
        if (image.channels >= 3) {
            luma = 0.299 * px[0] + 0.587 * px[1] + 0.114 * px[2];
        } else {
            luma = px[0];
        }
        values[i] = luma / 255.0;
    }
    return Tensor({1, 1, image.height, image.width}, std::move(values));
}

Image8 to_image8(const Tensor& gray) {
    const Shape& s = gray.shape();
    if (s.batch != 1 || s.channels != 1) {
        throw std::invalid_argument("to_image8: expected a 1x1xHxW tensor");
    }
    Image8 img;
    img.width = s.width;
    img.height = s.height;
    img.channels = 1;
    img.pixels.resize(s.plane());
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        const double v = std::clamp(gray.data()[i], 0.0, 1.0);
        img.pixels[i] = static_cast<std::uint8_t>(std::lround(v * 255.0));
    }
    return img;
}

Tensor resize_bilinear(const Tensor& image, std::size_t height, std::size_t width) {
    const Shape& s = image.shape();
    if (s.batch != 1 || s.channels != 1) {
        throw std::invalid_argument("resize_bilinear: expected a 1x1xHxW tensor");
    }
    if (height == 0 || width == 0 || s.height == 0 || s.width == 0) {
        throw std::invalid_argument("resize_bilinear: zero-size image");
    }
    if (height == s.height && width == s.width) {
        return image;
    }
    const double sy = static_cast<double>(s.height) / static_cast<double>(height);
    const double sx = static_cast<double>(s.width) / static_cast<double>(width);
    auto sample_axis = [](std::size_t dst, double scale, std::size_t extent, std::size_t& i0, std::size_t& i1,
                          double& t) {
        double src = (static_cast<double>(dst) + 0.5) * scale - 0.5;
        src = std::clamp(src, 0.0, static_cast<double>(extent - 1));
        i0 = static_cast<std::size_t>(std::floor(src));
        i1 = std::min(i0 + 1, extent - 1);
        t = src - static_cast<double>(i0);
    };
    Tensor out({1, 1, height, width});
    for (std::size_t y = 0; y < height; ++y) {
        std::size_t y0 = 0, y1 = 0;
        double ty = 0.0;
        sample_axis(y, sy, s.height, y0, y1, ty);
        for (std::size_t x = 0; x < width; ++x) {
            std::size_t x0 = 0, x1 = 0;
            double tx = 0.0;
            sample_axis(x, sx, s.width, x0, x1, tx);
            const double top = (1.0 - tx) * image(0, 0, y0, x0) + tx * image(0, 0, y0, x1);
            const double bottom = (1.0 - tx) * image(0, 0, y1, x0) + tx * image(0, 0, y1, x1);
            out(0, 0, y, x) = (1.0 - ty) * top + ty * bottom;
        }
    }
    return out;
}

}  // namespace selfonn::pipeline
