#pragma once

#include <span>
#include <vector>

#include "tsg/discriminator.hpp"
#include "tsg/tensor.hpp"

namespace tsg {

// Adversarial generator loss for one stage's batch of fake scores:
// mean over the batch of -sum_branches log s(x_hat).
Tensor generator_loss(std::span<const ScoreSet> fake);

// One stage's discriminator loss:
// mean over the batch of -sum_branches [log s(x) + log(1 - s(x_hat))].
// Callers detach the generated inputs before scoring.
Tensor discriminator_loss(std::span<const ScoreSet> real, std::span<const ScoreSet> fake);

// Mean over the batch of -pearson(h, h_i).
Tensor style_loss(std::span<const Tensor> h_real, std::span<const Tensor> h_gen);

// L_total = L_adv + lambda * sum(style terms), applied identically for G and D.
Tensor total_loss(const Tensor& adversarial, std::span<const Tensor> style_terms, float lambda);

// Evaluation metrics, computed in double.
double metric_sl(std::span<const float> target, std::span<const float> generated);
double metric_psnr(const Tensor& a, const Tensor& b, double peak);

constexpr double kPsnrCap = 99.0;

}  // namespace tsg
