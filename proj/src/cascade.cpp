#include "nis/cascade.hpp"

#include "nis/rng.hpp"

namespace nis {

void ModuleSpec::validate() const {
  for (int f : {f1, f2, f3}) {
    if (f < 1 || f % 2 == 0) throw ConfigError("ModuleSpec: filter sizes must be odd and positive");
  }
  if (n1 < 1 || n2 < 1) throw ConfigError("ModuleSpec: channel counts must be positive");
}

CnnModule::CnnModule(const ModuleSpec& s)
    : spec(s), conv1(s.n1, 1, s.f1), conv2(s.n2, s.n1, s.f2), conv3(1, s.n2, s.f3) {}

std::size_t CascadeModel::parameter_count() const {
  std::size_t n = 0;
  for (const auto& m : modules) {
    for (int l = 0; l < CnnModule::kLayers; ++l) n += m.layer(l).weights.size() + m.layer(l).biases.size();
  }
  return n;
}

CascadeModel CascadeModel::zeros_like() const {
  CascadeModel z;
  for (const auto& m : modules) z.modules.emplace_back(m.spec);
  return z;
}

void CascadeModel::add_scaled(const CascadeModel& other, double scale) {
  if (other.modules.size() != modules.size()) throw ShapeError("CascadeModel::add_scaled: module count differs");
  for (std::size_t k = 0; k < modules.size(); ++k) {
    for (int l = 0; l < CnnModule::kLayers; ++l) {
      ConvLayer& a = modules[k].layer(l);
      const ConvLayer& b = other.modules[k].layer(l);
      if (a.weights.size() != b.weights.size() || a.biases.size() != b.biases.size()) {
        throw ShapeError("CascadeModel::add_scaled: layer shapes differ");
      }
      for (std::size_t i = 0; i < a.weights.size(); ++i) a.weights[i] += scale * b.weights[i];
      for (std::size_t i = 0; i < a.biases.size(); ++i) a.biases[i] += scale * b.biases[i];
    }
  }
}

CascadeModel init_cascade(const ModuleSpec& spec, int n_modules, std::uint64_t seed, double weight_std,
                          Complex bias_init) {
  if (n_modules < 1) throw ConfigError("init_cascade: need at least one module");
  if (!(weight_std >= 0.0)) throw ConfigError("init_cascade: weight_std must be >= 0");
  CascadeModel model;
  RngStream rng(seed);
  for (int k = 0; k < n_modules; ++k) {
    CnnModule m(spec);
    for (int l = 0; l < CnnModule::kLayers; ++l) {
      for (Complex& w : m.layer(l).weights) {
        const double re = rng.normal();
        const double im = rng.normal();
        w = weight_std * Complex(re, im);
      }
      for (Complex& b : m.layer(l).biases) b = bias_init;
    }
    model.modules.push_back(std::move(m));
  }
  return model;
}

ComplexTensor module_forward(const CnnModule& module, const ComplexTensor& x, ModuleTape* tape) {
  if (x.channels != 1) throw ShapeError("module_forward: input must have one channel, got " + x.shape_string());
  ComplexTensor z1 = cconv2d(x, module.conv1);
  auto [pooled, memo] = maxpool2(crelu(z1));
  ComplexTensor z2 = cconv2d(pooled, module.conv2);
  ComplexTensor up = upsample2(crelu(z2));
  ComplexTensor z3 = cconv2d(up, module.conv3);
  if (module.spec.residual) {
    for (std::size_t i = 0; i < z3.size(); ++i) z3.data[i] += x.data[i];
  }
  ComplexTensor out = crelu(z3);
  if (tape) {
    tape->input = x;
    tape->z1 = std::move(z1);
    tape->pooled = std::move(pooled);
    tape->z2 = std::move(z2);
    tape->up = std::move(up);
    tape->z3 = std::move(z3);
    tape->pool = std::move(memo);
  }
  return out;
}

ComplexTensor cascade_forward(const CascadeModel& model, const ComplexTensor& x, CascadeTape* tape, int n_modules) {
  const int total = static_cast<int>(model.modules.size());
  const int count = n_modules < 0 ? total : n_modules;
  if (count > total) throw ConfigError("cascade_forward: model has only " + std::to_string(total) + " modules");
  if (x.channels != 1 || x.height % 2 != 0 || x.width % 2 != 0) {
    throw ShapeError("cascade_forward: input must be 1 x H x W with even H, W; got " + x.shape_string());
  }
  if (tape) tape->modules.assign(count, ModuleTape{});
  ComplexTensor cur = x;
  for (int k = 0; k < count; ++k) cur = module_forward(model.modules[k], cur, tape ? &tape->modules[k] : nullptr);
  return cur;
}

ComplexTensor module_backward(const CnnModule& module, const ModuleTape& tape, const ComplexTensor& grad_out,
                              CnnModule& grads, bool need_input) {
  if (tape.z3.size() == 0 || tape.pool.winners.empty()) throw Error("module_backward: forward tape is missing");
  ComplexTensor g3 = crelu_backward(tape.z3, grad_out);
  ConvGrad c3 = cconv2d_backward(tape.up, module.conv3, g3);
  ComplexTensor g2 = crelu_backward(tape.z2, upsample2_backward(c3.input));
  ConvGrad c2 = cconv2d_backward(tape.pooled, module.conv2, g2);
  ComplexTensor g1 = crelu_backward(tape.z1, maxpool2_backward(tape.pool, c2.input));
  ConvGrad c1 = cconv2d_backward(tape.input, module.conv1, g1, need_input);

  grads.conv1.weights = std::move(c1.weights);
  grads.conv1.biases = std::move(c1.biases);
  grads.conv2.weights = std::move(c2.weights);
  grads.conv2.biases = std::move(c2.biases);
  grads.conv3.weights = std::move(c3.weights);
  grads.conv3.biases = std::move(c3.biases);

  if (!need_input) return {};
  ComplexTensor gx = std::move(c1.input);
  if (module.spec.residual) {
    for (std::size_t i = 0; i < gx.size(); ++i) gx.data[i] += g3.data[i];
  }
  return gx;
}

CascadeGradients cascade_backward(const CascadeModel& model, const CascadeTape& tape, const ComplexTensor& grad_out,
                                  bool need_input) {
  const int count = static_cast<int>(tape.modules.size());
  if (count == 0) throw Error("cascade_backward: forward tape is missing");
  if (count > static_cast<int>(model.modules.size())) throw ShapeError("cascade_backward: tape longer than model");
  CascadeGradients out{model.zeros_like(), {}};
  ComplexTensor g = grad_out;
  for (int k = count - 1; k >= 0; --k) {
    g = module_backward(model.modules[k], tape.modules[k], g, out.params.modules[k], k > 0 || need_input);
  }
  if (need_input) out.input = std::move(g);
  return out;
}

}  // namespace nis
