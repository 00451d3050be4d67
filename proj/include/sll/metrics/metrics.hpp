#pragma once

#include <vector>

#include "sll/nn/tensor.hpp"

namespace sll::metrics {

inline constexpr double kPsnrCap = 99.0;
inline constexpr std::size_t kSsimWindow = 7;

/// Inputs in [-1, 1] are compared on the [0, 1] scale with MAX = 1.
/// Identical inputs give kPsnrCap.
double psnr(const nn::Tensor& a, const nn::Tensor& b);

/// Mean SSIM over every valid 7x7 window position and channel, uniform
/// weights, C1 = 0.01^2, C2 = 0.03^2 on the [0, 1] scale. Accepts one image
/// [C,H,W] or a single-image batch [1,C,H,W].
double ssim(const nn::Tensor& a, const nn::Tensor& b);

/// Mean squared error on the [0, 1] scale.
double image_mse(const nn::Tensor& a, const nn::Tensor& b);

struct FeatureSimilarity {
    double cosine = 0.0;  // mean of per-sample cosines over nonzero samples
    double mse = 0.0;     // mean over all elements
};

/// Per-sample comparison of two [N, ...] feature batches. Samples where
/// either side has zero norm are left out of the cosine; throws if none
/// remain.
FeatureSimilarity feature_similarity(const nn::Tensor& sub, const nn::Tensor& tgt);

struct ImageScores {
    double psnr = 0.0;
    double ssim = 0.0;
    double mse = 0.0;
};

/// Scores for each image of two [N,C,H,W] batches.
std::vector<ImageScores> score_images(const nn::Tensor& truth, const nn::Tensor& recon);

}  // namespace sll::metrics
