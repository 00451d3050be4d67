#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "sll/metrics/metrics.hpp"

namespace sll::metrics {

struct PpmImage {
    std::size_t width = 0;
    std::size_t height = 0;
    std::vector<std::uint8_t> rgb;  // row-major, 3 bytes per pixel
};

/// Byte for a value in [-1, 1]: round((v + 1) * 127.5), clamped.
std::uint8_t to_byte(double v);

/// Tiles [N,3,H,W] images row-major into a grid `cols` wide.
PpmImage tile_grid(const nn::Tensor& images, std::size_t cols);

/// Binary P6 with maxval 255 and an optional one-line header comment.
std::vector<std::uint8_t> encode_ppm(const PpmImage& img, const std::string& comment = {});
PpmImage decode_ppm(std::span<const std::uint8_t> bytes);

void write_grid_ppm(const nn::Tensor& images, std::size_t cols, const std::filesystem::path& path,
                    const std::string& comment = {});
PpmImage read_ppm(const std::filesystem::path& path);

struct MetricsReport {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::string status;
    std::optional<double> task_accuracy;
    std::vector<ImageScores> images;
    std::optional<FeatureSimilarity> features;
    /// Free-form extra fields (defense, detection, attack settings).
    nlohmann::json extra = nlohmann::json::object();

    double mean_psnr() const;
    double mean_ssim() const;
    double mean_mse() const;

    nlohmann::json to_json() const;
    /// Columns: index, psnr, ssim, mse.
    std::string per_image_csv() const;
};

/// Writes report.json and, when there are image scores, per_image.csv.
void write_report(const MetricsReport& report, const std::filesystem::path& dir);

/// Canonical text form of a JSON document: sorted keys, two-space indent,
/// trailing newline.
std::string canonical_dump(const nlohmann::json& j);

void write_text(const std::filesystem::path& path, const std::string& text);

}  // namespace sll::metrics
