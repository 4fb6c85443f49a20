#pragma once

#include <vector>

#include "efc/tensor.hpp"

namespace efc {

// Scalar losses, all differentiable through the tape.

// Mean of squared differences over all elements.
Tensor mse(const Tensor& a, const Tensor& b, Tape* tape = nullptr);

// Log-sum-exp-stable softmax cross entropy, mean over the batch.
// logits (B,K) or (K); labels must be in [0,K).
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels, Tape* tape = nullptr);

// Cross entropy against label-smoothed targets: (1-eps) on the true class,
// eps/K everywhere. Keeps teacher logits calibrated so the distillation KL
// carries usable mass at T=1.
Tensor cross_entropy_smoothed(const Tensor& logits, const std::vector<int>& labels, float eps,
                              Tape* tape = nullptr);

// KL(softmax(teacher/T) || softmax(student/T)), mean over the batch.
// Gradients flow into the student logits only.
Tensor kl_teacher_student(const Tensor& teacher_logits, const Tensor& student_logits, float temperature,
                          Tape* tape = nullptr);

}  // namespace efc
