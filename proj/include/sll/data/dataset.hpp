#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "sll/nn/rng.hpp"
#include "sll/nn/tensor.hpp"

namespace sll::data {

enum class Provenance { synthetic, cifar10_bin, filtered, subsampled };

std::string to_string(Provenance p);

/// Images [N, C, H, W] with values in [-1, 1] plus one label per image.
struct ImageDataset {
    nn::Tensor images;
    std::vector<int> labels;
    std::vector<std::string> class_names;
    Provenance provenance = Provenance::synthetic;

    std::size_t size() const { return labels.size(); }
    std::size_t num_classes() const { return class_names.size(); }
    nn::Shape image_shape() const { return images.sample_shape(); }

    /// Images and labels of the selected rows, in the given order.
    nn::Tensor batch_images(std::span<const std::size_t> indices) const;
    std::vector<int> batch_labels(std::span<const std::size_t> indices) const;

    /// Throws if the invariants (label range, value range, sizes) do not hold.
    void validate() const;
};

/// Procedural shapes: 0 disk, 1 square, 2 cross, 3 stripes.
struct SyntheticSpec {
    std::size_t image_size = 16;  // 16 or 32
    std::size_t num_classes = 4;  // 2..4
    double color_jitter = 0.15;
    double position_jitter = 2.0;  // pixels
    double background_noise = 0.05;
    bool domain_shift = false;
    std::array<double, 3> palette_offset{0.10, -0.06, 0.04};
    double texture_amplitude = 0.03;

    void validate() const;
};

/// Classes {0, 1} (disk, square) form the "living" half of the fixed
/// living/non-living bipartition; {2, 3} are non-living.
const std::set<int>& living_classes();
const std::set<int>& non_living_classes();

std::vector<std::string> synthetic_class_names(std::size_t num_classes);

/// Balanced generation: each class gets floor(n/k) or ceil(n/k) images, in
/// shuffled order. Deterministic in (spec, n, rng state).
ImageDataset gen_synthetic(const SyntheticSpec& spec, std::size_t n, nn::Rng& rng);

/// Reads one or more concatenated CIFAR-10 binary records (1 label byte +
/// 3072 pixel bytes, R/G/B planes of 32x32). Pixels map via x/127.5 - 1.
/// Throws on a size that is not a multiple of the record length or a label
/// byte above 9. `image_size` other than 32 reads the same layout at a
/// smaller resolution.
ImageDataset load_cifar10(const std::filesystem::path& path, std::size_t image_size = 32);
ImageDataset decode_cifar10(std::span<const std::uint8_t> bytes, std::size_t image_size = 32);

/// Inverse of the loader for 3-channel images of any square size: each pixel
/// quantizes to round((x + 1) * 127.5). Labels must fit in one byte.
std::vector<std::uint8_t> encode_cifar_style(const ImageDataset& ds);
void write_cifar_style(const ImageDataset& ds, const std::filesystem::path& path);

/// Byte value the binary format would store for a pixel in [-1, 1].
std::uint8_t quantize_pixel(double v);

ImageDataset filter_categories(const ImageDataset& ds, const std::set<int>& keep);
ImageDataset subsample(const ImageDataset& ds, std::size_t n, nn::Rng& rng);

}  // namespace sll::data
