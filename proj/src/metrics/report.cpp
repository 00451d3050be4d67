#include "sll/metrics/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iterator>
#include <stdexcept>

namespace sll::metrics {
namespace {

std::string fixed(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.10f", v);
    return buf;
}

template <typename F>
double mean_of(const std::vector<ImageScores>& v, F f) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (const auto& x : v) s += f(x);
    return s / static_cast<double>(v.size());
}

}  // namespace

std::uint8_t to_byte(double v) {
    const double b = std::round((std::clamp(v, -1.0, 1.0) + 1.0) * 127.5);
    return static_cast<std::uint8_t>(b);
}

PpmImage tile_grid(const nn::Tensor& images, std::size_t cols) {
    if (images.rank() != 4 || images.dim(1) != 3) throw std::invalid_argument("grid expects [N,3,H,W] images");
    if (cols == 0) throw std::invalid_argument("grid needs at least one column");
    const std::size_t n = images.dim(0), h = images.dim(2), w = images.dim(3);
    const std::size_t rows = (n + cols - 1) / cols;
    PpmImage img;
    img.width = std::min(cols, n) * w;
    img.height = rows * h;
    img.rgb.assign(img.width * img.height * 3, 0);
    for (std::size_t k = 0; k < n; ++k) {
        const std::size_t oy = (k / cols) * h, ox = (k % cols) * w;
        for (std::size_t c = 0; c < 3; ++c)
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    img.rgb[((oy + y) * img.width + ox + x) * 3 + c] =
                        to_byte(images[((k * 3 + c) * h + y) * w + x]);
    }
    return img;
}

std::vector<std::uint8_t> encode_ppm(const PpmImage& img, const std::string& comment) {
    if (img.rgb.size() != img.width * img.height * 3) throw std::invalid_argument("ppm: pixel buffer size mismatch");
    if (comment.find('\n') != std::string::npos) throw std::invalid_argument("ppm: comment spans lines");
    const std::string note = comment.empty() ? "" : "# " + comment + "\n";
    const std::string header =
        "P6\n" + note + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.rgb.begin(), img.rgb.end());
    return out;
}

PpmImage decode_ppm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size() && (std::isspace(bytes[pos]) || bytes[pos] == '#')) {
            if (bytes[pos] == '#')
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            else
                ++pos;
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t += static_cast<char>(bytes[pos++]);
        if (t.empty()) throw std::runtime_error("ppm: truncated header");
        return t;
    };
    if (token() != "P6") throw std::runtime_error("ppm: not a binary P6 file");
    PpmImage img;
    img.width = std::stoul(token());
    img.height = std::stoul(token());
    if (token() != "255") throw std::runtime_error("ppm: maxval must be 255");
    ++pos;  // single whitespace before the raster
    const std::size_t need = img.width * img.height * 3;
    if (bytes.size() < pos || bytes.size() - pos != need) throw std::runtime_error("ppm: raster size mismatch");
    img.rgb.assign(bytes.begin() + static_cast<std::ptrdiff_t>(pos), bytes.end());
    return img;
}

void write_grid_ppm(const nn::Tensor& images, std::size_t cols, const std::filesystem::path& path,
                    const std::string& comment) {
    const auto bytes = encode_ppm(tile_grid(images, cols), comment);
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

PpmImage read_ppm(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    return decode_ppm(bytes);
}

double MetricsReport::mean_psnr() const {
    return mean_of(images, [](const ImageScores& s) { return s.psnr; });
}
double MetricsReport::mean_ssim() const {
    return mean_of(images, [](const ImageScores& s) { return s.ssim; });
}
double MetricsReport::mean_mse() const {
    return mean_of(images, [](const ImageScores& s) { return s.mse; });
}

nlohmann::json MetricsReport::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["status"] = status;
    if (task_accuracy) j["task_accuracy"] = *task_accuracy;
    if (!images.empty()) {
        j["reconstruction"] = {{"images", images.size()},
                               {"mean_psnr", mean_psnr()},
                               {"mean_ssim", mean_ssim()},
                               {"mean_mse", mean_mse()}};
    }
    if (features) j["feature_similarity"] = {{"cosine", features->cosine}, {"mse", features->mse}};
    for (const auto& [k, v] : extra.items()) j[k] = v;
    return j;
}

std::string MetricsReport::per_image_csv() const {
    std::string out = "index,psnr,ssim,mse,config_hash\n";
    for (std::size_t i = 0; i < images.size(); ++i)
        out += std::to_string(i) + "," + fixed(images[i].psnr) + "," + fixed(images[i].ssim) + "," +
               fixed(images[i].mse) + "," + config_hash + "\n";
    return out;
}

std::string canonical_dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << text;
}

void write_report(const MetricsReport& report, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_text(dir / "report.json", canonical_dump(report.to_json()));
    if (!report.images.empty()) write_text(dir / "per_image.csv", report.per_image_csv());
}

}  // namespace sll::metrics
