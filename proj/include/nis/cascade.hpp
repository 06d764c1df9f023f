#pragma once

#include <cstdint>
#include <vector>

#include "nis/layers.hpp"

namespace nis {

/// Layer sizes of one CNN module:
/// conv(f1, n1) + CReLU, maxpool, conv(f2, n2) + CReLU, upsample, conv(f3, 1) + CReLU.
struct ModuleSpec {
  int f1 = 9;
  int n1 = 32;
  int f2 = 5;
  int n2 = 16;
  int f3 = 5;
  /// Adds the module input to the last convolution before its CReLU.
  bool residual = false;

  void validate() const;
  bool operator==(const ModuleSpec&) const = default;
};

struct CnnModule {
  ModuleSpec spec;
  ConvLayer conv1;
  ConvLayer conv2;
  ConvLayer conv3;

  CnnModule() = default;
  /// Zero parameters with the shapes implied by spec.
  explicit CnnModule(const ModuleSpec& spec);

  static constexpr int kLayers = 3;
  ConvLayer& layer(int i) { return i == 0 ? conv1 : (i == 1 ? conv2 : conv3); }
  const ConvLayer& layer(int i) const { return i == 0 ? conv1 : (i == 1 ? conv2 : conv3); }

  bool operator==(const CnnModule&) const = default;
};

/// Modules applied in series; also used as a gradient container of identical shape.
struct CascadeModel {
  std::vector<CnnModule> modules;

  std::size_t parameter_count() const;  // complex parameters
  /// Same shapes, all parameters zero.
  CascadeModel zeros_like() const;
  /// this += scale * other (shapes must match).
  void add_scaled(const CascadeModel& other, double scale);

  bool operator==(const CascadeModel&) const = default;
};

inline constexpr double kDefaultWeightStd = 1e-3;
inline constexpr Complex kDefaultBiasInit{1e-3, 1e-3};

/// Weights drawn complex Gaussian (independent re/im, zero mean, std per
/// component). Biases start at a small positive constant so that every CReLU
/// passes gradient at the first step. Deterministic in seed.
CascadeModel init_cascade(const ModuleSpec& spec, int n_modules, std::uint64_t seed,
                          double weight_std = kDefaultWeightStd, Complex bias_init = kDefaultBiasInit);

/// Intermediate values of one module forward pass.
struct ModuleTape {
  ComplexTensor input;
  ComplexTensor z1;      // conv1 output
  ComplexTensor pooled;  // conv2 input
  ComplexTensor z2;      // conv2 output
  ComplexTensor up;      // conv3 input
  ComplexTensor z3;      // conv3 output (+ skip)
  PoolMemo pool;
};

struct CascadeTape {
  std::vector<ModuleTape> modules;
};

ComplexTensor module_forward(const CnnModule& module, const ComplexTensor& x, ModuleTape* tape = nullptr);

/// Applies modules [0, n_modules) (all when n_modules < 0). Input is 1 x H x W with H, W even.
ComplexTensor cascade_forward(const CascadeModel& model, const ComplexTensor& x, CascadeTape* tape = nullptr,
                              int n_modules = -1);

/// Returns the gradient with respect to the module input when need_input is set.
ComplexTensor module_backward(const CnnModule& module, const ModuleTape& tape, const ComplexTensor& grad_out,
                              CnnModule& grads, bool need_input = true);

struct CascadeGradients {
  CascadeModel params;
  ComplexTensor input;
};

/// Reverse pass over the modules recorded in tape; the parameter gradients of
/// modules not in the tape are zero.
CascadeGradients cascade_backward(const CascadeModel& model, const CascadeTape& tape, const ComplexTensor& grad_out,
                                  bool need_input = true);

}  // namespace nis
