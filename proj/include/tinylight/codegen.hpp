#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "tinylight/supergraph.hpp"

namespace tinylight {

enum class Precision { kFloat32, kQ15 };

// Per-tensor symmetric Q15 with power-of-two scales: real = q * 2^exp.
struct Q15Dense {
  int fin = 0;
  int fout = 0;
  std::vector<std::int16_t> weight;  // fin x fout, row-major
  std::vector<std::int16_t> bias;    // accumulator units times 2^bias_shift
  int weight_exp = 0;
  int bias_shift = 0;
  int product_shift = 0;  // rounding right shift applied to every x*w product
  int out_shift = 0;      // accumulator to output activation; negative shifts right
};

namespace q15 {

constexpr std::int32_t kMax = 32767;
constexpr std::int32_t kMin = -32768;

// Symmetric round-half-away-from-zero right shift; shared with the emitted C.
inline std::int32_t rshift(std::int64_t v, int s) {
  if (s <= 0) return static_cast<std::int32_t>(v);
  const std::int64_t half = std::int64_t{1} << (s - 1);
  return static_cast<std::int32_t>(v >= 0 ? (v + half) >> s : -((-v + half) >> s));
}

inline std::int32_t saturate(std::int64_t v) {
  return static_cast<std::int32_t>(std::clamp<std::int64_t>(v, kMin, kMax));
}

inline std::int32_t requant(std::int32_t acc, int shift) {
  const std::int64_t v = shift >= 0 ? static_cast<std::int64_t>(acc) * (std::int64_t{1} << shift) : rshift(acc, -shift);
  return saturate(v);
}

// Float arithmetic on purpose: matches the emitted quantizer bit for bit.
inline std::int16_t quantize_input(float raw, float qscale) {
  const float v = raw * qscale;
  if (v >= 32767.0f) return kMax;
  if (v <= -32768.0f) return kMin;
  const long r = v >= 0.0f ? static_cast<long>(v + 0.5f) : -static_cast<long>(-v + 0.5f);
  return static_cast<std::int16_t>(std::clamp<long>(r, kMin, kMax));
}

// Smallest e with maxabs * headroom / 2^e <= 32767; zero tensors get e = 0.
inline int scale_exp(double maxabs, double headroom = 1.0) {
  if (!(maxabs > 0.0)) return 0;
  int e = static_cast<int>(std::ceil(std::log2(maxabs * headroom / kMax)));
  while (maxabs * headroom / std::ldexp(1.0, e) > kMax) ++e;
  return e;
}

inline std::int32_t dense_unit(const Q15Dense& d, std::span<const std::int16_t> x, int o) {
  std::int32_t acc = static_cast<std::int32_t>(d.bias[o]) * (std::int32_t{1} << d.bias_shift);
  for (int i = 0; i < d.fin; ++i)
    acc += rshift(static_cast<std::int64_t>(static_cast<std::int32_t>(x[i]) * d.weight[i * d.fout + o]), d.product_shift);
  return acc;
}

}  // namespace q15

struct Q15Model {
  std::vector<int> input_dims;
  std::vector<float> input_qscale;  // raw sensor value -> Q15 input
  std::vector<int> input_exp;
  std::vector<int> layer2_dims;
  std::vector<int> layer3_dims;
  int output_dim = 0;
  int h2_exp = 0;
  int h3_exp = 0;
  int out_exp = 0;
  std::vector<std::vector<Q15Dense>> edges1;
  std::vector<std::vector<Q15Dense>> edges2;
  std::vector<Q15Dense> head;

  int input_total() const {
    int n = 0;
    for (int d : input_dims) n += d;
    return n;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    auto add = [&](const Q15Dense& d) { n += d.weight.size() + d.bias.size(); };
    for (const auto& row : edges1) std::for_each(row.begin(), row.end(), add);
    for (const auto& row : edges2) std::for_each(row.begin(), row.end(), add);
    std::for_each(head.begin(), head.end(), add);
    return n;
  }

  std::vector<std::int16_t> quantize_inputs(std::span<const float> raw) const {
    if (raw.size() != static_cast<std::size_t>(input_total())) throw ShapeError("q15: wrong input length");
    std::vector<std::int16_t> x;
    std::size_t k = 0;
    for (std::size_t i = 0; i < input_dims.size(); ++i)
      for (int j = 0; j < input_dims[i]; ++j, ++k) x.push_back(q15::quantize_input(raw[k], input_qscale[i]));
    return x;
  }

  // Integer forward on packed quantized inputs; mirrors the emitted C.
  std::vector<std::int16_t> forward(std::span<const std::int16_t> x) const {
    if (x.size() != static_cast<std::size_t>(input_total())) throw ShapeError("q15: wrong input length");
    auto mix = [](const std::vector<std::span<const std::int16_t>>& in, auto edge, int width, bool act) {
      std::vector<std::int16_t> out(width, 0);
      for (std::size_t i = 0; i < in.size(); ++i) {
        const Q15Dense& d = edge(i);
        for (int o = 0; o < width; ++o) {
          std::int32_t v = q15::requant(q15::dense_unit(d, in[i], o), d.out_shift);
          if (act && v < 0) v = 0;
          out[o] = static_cast<std::int16_t>(q15::saturate(static_cast<std::int64_t>(out[o]) + v));
        }
      }
      return out;
    };
    std::vector<std::span<const std::int16_t>> in;
    std::size_t off = 0;
    for (int d : input_dims) {
      in.push_back(x.subspan(off, static_cast<std::size_t>(d)));
      off += static_cast<std::size_t>(d);
    }
    std::vector<std::vector<std::int16_t>> h2, h3;
    for (std::size_t j = 0; j < layer2_dims.size(); ++j)
      h2.push_back(mix(in, [&](std::size_t i) -> const Q15Dense& { return edges1[i][j]; }, layer2_dims[j], true));
    std::vector<std::span<const std::int16_t>> h2s(h2.begin(), h2.end());
    for (std::size_t k = 0; k < layer3_dims.size(); ++k)
      h3.push_back(mix(h2s, [&](std::size_t j) -> const Q15Dense& { return edges2[j][k]; }, layer3_dims[k], true));
    std::vector<std::span<const std::int16_t>> h3s(h3.begin(), h3.end());
    return mix(h3s, [&](std::size_t k) -> const Q15Dense& { return head[k]; }, output_dim, false);
  }

  std::vector<double> dequantize(std::span<const std::int16_t> q) const {
    std::vector<double> out;
    for (std::int16_t v : q) out.push_back(std::ldexp(static_cast<double>(v), out_exp));
    return out;
  }

  std::vector<double> forward_raw(std::span<const float> raw) const {
    const auto x = quantize_inputs(raw);
    return dequantize(forward(x));
  }
};

struct CodegenOptions {
  Precision precision = Precision::kFloat32;
  std::string prefix = "tl";
  bool emit_argmax = true;
  int test_vector_count = 1000;
  std::optional<Q15Model> q15;  // required for Precision::kQ15
};

struct GeneratedCode {
  std::string source;
  std::size_t weight_constants = 0;
  std::size_t static_bytes = 0;  // weight and bias arrays
  std::size_t buffer_bytes = 0;  // both activation buffers
  int buffer_dim = 0;
};

namespace detail {

inline void check_subgraph(const SubGraph& sub) {
  if (!sub.connected()) throw ShapeError("codegen: sub-graph is not connected");
  if (sub.input_dims.size() != sub.feature_ids.size() || sub.layer2_dims.size() != sub.layer2_blocks.size() ||
      sub.layer3_dims.size() != sub.layer3_blocks.size())
    throw ShapeError("codegen: inconsistent sub-graph metadata");
  auto check = [](const DenseParams& p, int fin, int fout, const char* where) {
    if (p.fin() != static_cast<std::size_t>(fin) || p.fout() != static_cast<std::size_t>(fout) ||
        p.bias.size() != static_cast<std::size_t>(fout))
      throw ShapeError(std::string("codegen: unsupported structure at ") + where);
  };
  for (std::size_t i = 0; i < sub.edges1.size(); ++i)
    for (std::size_t j = 0; j < sub.edges1[i].size(); ++j) check(sub.edges1[i][j], sub.input_dims[i], sub.layer2_dims[j], "layer 1");
  for (std::size_t j = 0; j < sub.edges2.size(); ++j)
    for (std::size_t k = 0; k < sub.edges2[j].size(); ++k) check(sub.edges2[j][k], sub.layer2_dims[j], sub.layer3_dims[k], "layer 2");
  for (std::size_t k = 0; k < sub.head.size(); ++k) check(sub.head[k], sub.layer3_dims[k], sub.output_dim, "output layer");
}

inline void check_prefix(const std::string& p) {
  bool ok = !p.empty() && (std::isalpha(static_cast<unsigned char>(p[0])) || p[0] == '_');
  for (char c : p) ok = ok && (std::isalnum(static_cast<unsigned char>(c)) || c == '_');
  if (!ok) throw ConfigError("codegen: prefix '" + p + "' is not a C identifier");
}

inline std::string upper(std::string s) {
  for (char& c : s) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  return s;
}

inline std::string c_float(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.9e", static_cast<double>(static_cast<float>(v)));
  return std::string(buf) + "f";
}

template <class T, class Fmt>
void emit_array(std::ostream& os, const std::string& type, const std::string& name, const std::vector<T>& v, Fmt fmt) {
  os << "static const " << type << ' ' << name << '[' << v.size() << "] = {";
  for (std::size_t k = 0; k < v.size(); ++k) {
    os << (k % 6 == 0 ? "\n    " : " ") << fmt(v[k]);
    if (k + 1 < v.size()) os << ',';
  }
  os << "\n};\n";
}

struct Edge {
  std::string w, b;
  const DenseParams* p = nullptr;
  const Q15Dense* q = nullptr;
  int fin = 0, fout = 0;
  std::string input;  // C expression for the input array
  int out_offset = 0;
};

// Activations of the double-precision forward, for calibration.
struct Trace {
  std::vector<std::vector<double>> h2, h3;
  std::vector<double> q;
};

inline Trace trace(const SubGraph& sub, const SubGraphInput& x) {
  Trace t;
  for (std::size_t j = 0; j < sub.layer2_dims.size(); ++j) {
    std::vector<double> h(sub.layer2_dims[j], 0.0);
    for (std::size_t i = 0; i < x.size(); ++i) accumulate_scaled(h, relu(linear(x[i], sub.edges1[i][j])), 1.0);
    t.h2.push_back(std::move(h));
  }
  for (std::size_t k = 0; k < sub.layer3_dims.size(); ++k) {
    std::vector<double> h(sub.layer3_dims[k], 0.0);
    for (std::size_t j = 0; j < t.h2.size(); ++j) accumulate_scaled(h, relu(linear(t.h2[j], sub.edges2[j][k])), 1.0);
    t.h3.push_back(std::move(h));
  }
  t.q.assign(sub.output_dim, 0.0);
  for (std::size_t k = 0; k < t.h3.size(); ++k) accumulate_scaled(t.q, linear(t.h3[k], sub.head[k]), 1.0);
  return t;
}

inline double maxabs(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

inline Q15Dense quantize_dense(const DenseParams& p, int in_exp, int out_exp) {
  Q15Dense d;
  d.fin = static_cast<int>(p.fin());
  d.fout = static_cast<int>(p.fout());
  d.weight_exp = q15::scale_exp(maxabs(p.weight.value));
  for (double w : p.weight.value)
    d.weight.push_back(static_cast<std::int16_t>(std::clamp<double>(std::round(std::ldexp(w, -d.weight_exp)), q15::kMin, q15::kMax)));
  const double bmax = maxabs(p.bias.value);
  // Accumulator must hold fin products of at most 2^30 plus the bias.
  for (d.product_shift = 0;; ++d.product_shift) {
    const int acc_exp = in_exp + d.weight_exp + d.product_shift;
    const double products = static_cast<double>(d.fin) * (std::ldexp(1.0, 30 - d.product_shift) + 1.0);
    const double bias = std::ldexp(bmax, -acc_exp);
    if (bias <= std::ldexp(1.0, 30) && products + bias < std::ldexp(1.0, 31) - 1.0) break;
    if (d.product_shift > 60) throw ShapeError("q15: cannot fit accumulator");
  }
  const int acc_exp = in_exp + d.weight_exp + d.product_shift;
  d.bias_shift = std::max(0, q15::scale_exp(std::ldexp(bmax, -acc_exp)));
  for (double b : p.bias.value)
    d.bias.push_back(static_cast<std::int16_t>(
        std::clamp<double>(std::round(std::ldexp(b, -(acc_exp + d.bias_shift))), q15::kMin, q15::kMax)));
  // Shifts past 32 saturate any non-zero accumulator anyway.
  d.out_shift = std::clamp(acc_exp - out_exp, -62, 32);
  return d;
}

}  // namespace detail

// Calibrates power-of-two scales from observed activations (one bit of
// headroom for inputs and activations) and quantizes every tensor.
inline Q15Model quantize_q15(const SubGraph& sub, const std::vector<SubGraphInput>& calibration) {
  detail::check_subgraph(sub);
  if (calibration.size() < 100) throw ConfigError("quantize_q15: at least 100 calibration states required");
  constexpr double kHeadroom = 2.0;
  std::vector<double> in_max(sub.input_dims.size(), 0.0);
  double h2_max = 0.0, h3_max = 0.0, q_max = 0.0;
  for (const auto& x : calibration) {
    if (x.size() != sub.input_dims.size()) throw ShapeError("quantize_q15: calibration state has wrong arity");
    for (std::size_t i = 0; i < x.size(); ++i) in_max[i] = std::max(in_max[i], detail::maxabs(x[i]));
    const auto t = detail::trace(sub, x);
    for (const auto& h : t.h2) h2_max = std::max(h2_max, detail::maxabs(h));
    for (const auto& h : t.h3) h3_max = std::max(h3_max, detail::maxabs(h));
    q_max = std::max(q_max, detail::maxabs(t.q));
  }
  Q15Model m;
  m.input_dims = sub.input_dims;
  m.layer2_dims = sub.layer2_dims;
  m.layer3_dims = sub.layer3_dims;
  m.output_dim = sub.output_dim;
  for (std::size_t i = 0; i < in_max.size(); ++i) {
    m.input_exp.push_back(q15::scale_exp(in_max[i], kHeadroom));
    const double scale = i < sub.input_scale.size() ? sub.input_scale[i] : 1.0;
    m.input_qscale.push_back(static_cast<float>(std::ldexp(scale, -m.input_exp.back())));
  }
  m.h2_exp = q15::scale_exp(h2_max, kHeadroom);
  m.h3_exp = q15::scale_exp(h3_max, kHeadroom);
  m.out_exp = q15::scale_exp(q_max, kHeadroom);
  for (std::size_t i = 0; i < sub.edges1.size(); ++i) {
    m.edges1.emplace_back();
    for (const auto& p : sub.edges1[i]) m.edges1.back().push_back(detail::quantize_dense(p, m.input_exp[i], m.h2_exp));
  }
  for (const auto& row : sub.edges2) {
    m.edges2.emplace_back();
    for (const auto& p : row) m.edges2.back().push_back(detail::quantize_dense(p, m.h2_exp, m.h3_exp));
  }
  for (const auto& p : sub.head) m.head.push_back(detail::quantize_dense(p, m.h3_exp, m.out_exp));
  return m;
}

// Emits one self-contained C99 file. Layout, for prefix "tl":
//   TL_NUM_INPUTS, TL_INPUT<i>_DIM, TL_INPUT_TOTAL, TL_OUTPUT_DIM, TL_BUFFER_DIM
//   tl_w1_<i>_<j>, tl_b1_<i>_<j>   feature i -> layer-2 block j
//   tl_w2_<j>_<k>, tl_b2_<j>_<k>   layer-2 block j -> layer-3 block k
//   tl_w3_<k>,     tl_b3_<k>       layer-3 block k -> output
//   void tl_forward(in1, ..., inN, q); void tl_forward_packed(x, q); int tl_argmax(q)
// Weights are row-major [fin][fout]. Float32 takes raw feature values (input
// scaling is folded into the first layer). Q15 takes inputs from
// tl_quantize_inputs and returns q-values in units of TL_OUTPUT_SCALE.
inline GeneratedCode emit_c(const SubGraph& sub, const CodegenOptions& opts = {}) {
  detail::check_subgraph(sub);
  detail::check_prefix(opts.prefix);
  const bool q = opts.precision == Precision::kQ15;
  if (q && !opts.q15) throw ConfigError("codegen: q15 precision requires calibrated scales (run quantize_q15)");
  if (q && (opts.q15->input_dims != sub.input_dims || opts.q15->layer2_dims != sub.layer2_dims ||
            opts.q15->layer3_dims != sub.layer3_dims || opts.q15->output_dim != sub.output_dim))
    throw ConfigError("codegen: q15 tables do not match the sub-graph");
  const std::string p = opts.prefix, P = detail::upper(opts.prefix);
  const std::string vt = q ? "int16_t" : "float";
  const std::size_t n_in = sub.input_dims.size();

  int h2_total = 0, h3_total = 0, in_total = 0;
  for (int d : sub.layer2_dims) h2_total += d;
  for (int d : sub.layer3_dims) h3_total += d;
  for (int d : sub.input_dims) in_total += d;
  const int buffer_dim = std::max(h2_total, h3_total);

  GeneratedCode out;
  out.buffer_dim = buffer_dim;
  out.buffer_bytes = 2 * static_cast<std::size_t>(buffer_dim) * (q ? 2 : 4);

  std::ostringstream os;
  os << "/* Generated sub-graph forward pass. Features:";
  for (std::size_t i = 0; i < n_in; ++i) os << " F" << sub.feature_ids[i] << '(' << sub.input_dims[i] << ')';
  os << "; " << (q ? "Q15 fixed point" : "float32") << ". */\n";
  if (q) os << "#include <stdint.h>\n";
  os << "\n#define " << P << "_NUM_INPUTS " << n_in << '\n';
  for (std::size_t i = 0; i < n_in; ++i) os << "#define " << P << "_INPUT" << i + 1 << "_DIM " << sub.input_dims[i] << '\n';
  os << "#define " << P << "_INPUT_TOTAL " << in_total << '\n';
  os << "#define " << P << "_OUTPUT_DIM " << sub.output_dim << '\n';
  os << "#define " << P << "_BUFFER_DIM " << buffer_dim << '\n';
  if (q) {
    for (std::size_t i = 0; i < n_in; ++i)
      os << "#define " << P << "_INPUT" << i + 1 << "_QSCALE " << detail::c_float(opts.q15->input_qscale[i]) << '\n';
    os << "#define " << P << "_OUTPUT_SCALE " << detail::c_float(std::ldexp(1.0, opts.q15->out_exp)) << '\n';
  }
  os << '\n';

  std::vector<detail::Edge> l1, l2, l3;
  auto emit_weights = [&](const std::string& w, const std::string& b, const DenseParams& d, const Q15Dense* qd,
                          double fold) {
    if (q) {
      detail::emit_array(os, "int16_t", w, qd->weight, [](std::int16_t v) { return std::to_string(v); });
      detail::emit_array(os, "int16_t", b, qd->bias, [](std::int16_t v) { return std::to_string(v); });
    } else {
      std::vector<double> wv = d.weight.value;
      for (double& v : wv) v *= fold;
      detail::emit_array(os, "float", w, wv, [](double v) { return detail::c_float(v); });
      detail::emit_array(os, "float", b, d.bias.value, [](double v) { return detail::c_float(v); });
    }
    out.weight_constants += d.weight.size() + d.bias.size();
  };
  int off = 0;
  std::vector<int> h2_off, h3_off;
  for (int d : sub.layer2_dims) h2_off.push_back(std::exchange(off, off + d));
  off = 0;
  for (int d : sub.layer3_dims) h3_off.push_back(std::exchange(off, off + d));
  for (std::size_t i = 0; i < n_in; ++i)
    for (std::size_t j = 0; j < sub.layer2_dims.size(); ++j) {
      const std::string sfx = std::to_string(i + 1) + "_" + std::to_string(j + 1);
      const double fold = i < sub.input_scale.size() ? sub.input_scale[i] : 1.0;
      emit_weights(p + "_w1_" + sfx, p + "_b1_" + sfx, sub.edges1[i][j], q ? &opts.q15->edges1[i][j] : nullptr, fold);
      l1.push_back({p + "_w1_" + sfx, p + "_b1_" + sfx, &sub.edges1[i][j], q ? &opts.q15->edges1[i][j] : nullptr,
                    sub.input_dims[i], sub.layer2_dims[j], "in" + std::to_string(i + 1), h2_off[j]});
    }
  for (std::size_t j = 0; j < sub.layer2_dims.size(); ++j)
    for (std::size_t k = 0; k < sub.layer3_dims.size(); ++k) {
      const std::string sfx = std::to_string(j + 1) + "_" + std::to_string(k + 1);
      emit_weights(p + "_w2_" + sfx, p + "_b2_" + sfx, sub.edges2[j][k], q ? &opts.q15->edges2[j][k] : nullptr, 1.0);
      l2.push_back({p + "_w2_" + sfx, p + "_b2_" + sfx, &sub.edges2[j][k], q ? &opts.q15->edges2[j][k] : nullptr,
                    sub.layer2_dims[j], sub.layer3_dims[k], "(buf_a + " + std::to_string(h2_off[j]) + ")", h3_off[k]});
    }
  for (std::size_t k = 0; k < sub.layer3_dims.size(); ++k) {
    const std::string sfx = std::to_string(k + 1);
    emit_weights(p + "_w3_" + sfx, p + "_b3_" + sfx, sub.head[k], q ? &opts.q15->head[k] : nullptr, 1.0);
    l3.push_back({p + "_w3_" + sfx, p + "_b3_" + sfx, &sub.head[k], q ? &opts.q15->head[k] : nullptr,
                  sub.layer3_dims[k], sub.output_dim, "(buf_b + " + std::to_string(h3_off[k]) + ")", 0});
  }
  out.static_bytes = out.weight_constants * (q ? 2 : 4);

  std::string sig = "void " + p + "_forward(";
  for (std::size_t i = 0; i < n_in; ++i)
    sig += "const " + vt + " in" + std::to_string(i + 1) + "[" + std::to_string(sub.input_dims[i]) + "], ";
  sig += vt + " q[" + std::to_string(sub.output_dim) + "])";
  os << '\n' << sig << ";\n";
  os << "void " << p << "_forward_packed(const " << vt << " *x, " << vt << " *q);\n";
  if (q) os << "void " << p << "_quantize_inputs(const float *raw, int16_t *x);\n";
  if (opts.emit_argmax) os << "int " << p << "_argmax(const " << vt << " *q);\n";

  if (q) {
    os << "\nstatic int32_t " << p << "_rshift(int64_t v, int s)\n{\n"
       << "    int64_t half;\n    if (s <= 0) return (int32_t)v;\n    half = (int64_t)1 << (s - 1);\n"
       << "    return (int32_t)(v >= 0 ? (v + half) >> s : -((-v + half) >> s));\n}\n";
    os << "\nstatic int32_t " << p << "_sat(int64_t v)\n{\n"
       << "    return (int32_t)(v > 32767 ? 32767 : (v < -32768 ? -32768 : v));\n}\n";
    os << "\nstatic int32_t " << p << "_requant(int32_t acc, int shift)\n{\n"
       << "    if (shift >= 0) return " << p << "_sat((int64_t)acc * ((int64_t)1 << shift));\n"
       << "    return " << p << "_sat((int64_t)" << p << "_rshift((int64_t)acc, -shift));\n}\n";
  }

  os << '\n' << sig << "\n{\n";
  os << "    " << vt << " buf_a[" << P << "_BUFFER_DIM];\n";
  os << "    " << vt << " buf_b[" << P << "_BUFFER_DIM];\n";
  os << "    " << (q ? "int32_t" : "float") << " acc;\n";
  if (q) os << "    int32_t v;\n";
  os << "    int i, o;\n\n";
  os << "    for (o = 0; o < " << P << "_BUFFER_DIM; ++o) {\n        buf_a[o] = 0;\n        buf_b[o] = 0;\n    }\n";
  os << "    for (o = 0; o < " << sub.output_dim << "; ++o) q[o] = 0;\n";
  auto emit_edge = [&](const detail::Edge& e, const std::string& dst, bool act) {
    const std::string fin = std::to_string(e.fin), fout = std::to_string(e.fout);
    os << "    for (o = 0; o < " << fout << "; ++o) {\n";
    if (q) {
      const Q15Dense& d = *e.q;
      os << "        acc = (int32_t)" << e.b << "[o] * " << (std::int32_t{1} << d.bias_shift) << ";\n";
      os << "        for (i = 0; i < " << fin << "; ++i) acc += " << p << "_rshift((int64_t)((int32_t)" << e.input
         << "[i] * " << e.w << "[i * " << fout << " + o]), " << d.product_shift << ");\n";
      os << "        v = " << p << "_requant(acc, " << d.out_shift << ");\n";
      if (act) os << "        if (v < 0) v = 0;\n";
      os << "        " << dst << "[" << e.out_offset << " + o] = (int16_t)" << p << "_sat((int64_t)" << dst << "["
         << e.out_offset << " + o] + v);\n";
    } else {
      os << "        acc = " << e.b << "[o];\n";
      os << "        for (i = 0; i < " << fin << "; ++i) acc += " << e.input << "[i] * " << e.w << "[i * " << fout
         << " + o];\n";
      os << "        " << dst << "[" << e.out_offset << " + o] += " << (act ? "acc > 0.0f ? acc : 0.0f" : "acc") << ";\n";
    }
    os << "    }\n";
  };
  for (const auto& e : l1) emit_edge(e, "buf_a", true);
  for (const auto& e : l2) emit_edge(e, "buf_b", true);
  for (const auto& e : l3) emit_edge(e, "q", false);
  os << "}\n";

  os << "\nvoid " << p << "_forward_packed(const " << vt << " *x, " << vt << " *q)\n{\n    " << p << "_forward(";
  off = 0;
  for (std::size_t i = 0; i < n_in; ++i) {
    os << "x + " << off << ", ";
    off += sub.input_dims[i];
  }
  os << "q);\n}\n";

  if (q) {
    os << "\nvoid " << p << "_quantize_inputs(const float *raw, int16_t *x)\n{\n    float v;\n    float s;\n    int k;\n\n"
       << "    for (k = 0; k < " << P << "_INPUT_TOTAL; ++k) {\n";
    off = 0;
    for (std::size_t i = 0; i < n_in; ++i) {
      off += sub.input_dims[i];
      os << "        " << (i ? "else if" : "if") << " (k < " << off << ") s = " << P << "_INPUT" << i + 1 << "_QSCALE;\n";
    }
    os << "        else s = 0.0f;\n"
       << "        v = raw[k] * s;\n"
       << "        if (v >= 32767.0f) x[k] = 32767;\n"
       << "        else if (v <= -32768.0f) x[k] = -32768;\n"
       << "        else x[k] = (int16_t)(v >= 0.0f ? (long)(v + 0.5f) : -(long)(-v + 0.5f));\n    }\n}\n";
  }
  if (opts.emit_argmax) {
    os << "\nint " << p << "_argmax(const " << vt << " *q)\n{\n    int o, best = 0;\n\n"
       << "    for (o = 1; o < " << sub.output_dim << "; ++o)\n        if (q[o] > q[best]) best = o;\n"
       << "    return best;\n}\n";
  }
  out.source = os.str();
  return out;
}

// --- test vectors --------------------------------------------------------

struct TestVectorSet {
  std::vector<int> input_dims;
  int output_dim = 0;
  std::vector<std::vector<float>> inputs;  // raw sensor values, packed
  std::vector<std::vector<float>> reference;
  std::vector<int> argmax;
};

inline std::string write_test_vectors(const TestVectorSet& set) {
  std::ostringstream os;
  os << "TLVEC 1\ninputs " << set.input_dims.size();
  for (int d : set.input_dims) os << ' ' << d;
  os << " outputs " << set.output_dim << " count " << set.inputs.size() << '\n';
  char buf[32];
  for (std::size_t n = 0; n < set.inputs.size(); ++n) {
    std::string line;
    for (float v : set.inputs[n]) {
      std::snprintf(buf, sizeof(buf), "%+.8e ", static_cast<double>(v));
      line += buf;
    }
    for (float v : set.reference[n]) {
      std::snprintf(buf, sizeof(buf), "%+.8e ", static_cast<double>(v));
      line += buf;
    }
    os << line << set.argmax[n] << '\n';
  }
  return os.str();
}

inline TestVectorSet read_test_vectors(const std::string& text) {
  std::istringstream is(text);
  std::string magic, word;
  int version = 0;
  std::size_t n_in = 0, count = 0;
  TestVectorSet set;
  if (!(is >> magic >> version) || magic != "TLVEC" || version != 1) throw Error("test vectors: bad header");
  if (!(is >> word >> n_in) || word != "inputs") throw Error("test vectors: missing inputs");
  set.input_dims.resize(n_in);
  for (int& d : set.input_dims)
    if (!(is >> d) || d <= 0) throw Error("test vectors: bad input dim");
  if (!(is >> word >> set.output_dim) || word != "outputs" || set.output_dim <= 0) throw Error("test vectors: missing outputs");
  if (!(is >> word >> count) || word != "count") throw Error("test vectors: missing count");
  int total = 0;
  for (int d : set.input_dims) total += d;
  for (std::size_t n = 0; n < count; ++n) {
    std::vector<float> x(total), r(set.output_dim);
    int a = 0;
    for (float& v : x)
      if (!(is >> v)) throw Error("test vectors: truncated vector " + std::to_string(n));
    for (float& v : r)
      if (!(is >> v)) throw Error("test vectors: truncated vector " + std::to_string(n));
    if (!(is >> a) || a < 0 || a >= set.output_dim) throw Error("test vectors: bad argmax in vector " + std::to_string(n));
    set.inputs.push_back(std::move(x));
    set.reference.push_back(std::move(r));
    set.argmax.push_back(a);
  }
  return set;
}

// Double-precision reference on float inputs, as stored in the vector file.
inline std::vector<double> reference_forward(const SubGraph& sub, std::span<const float> packed) {
  std::vector<std::vector<double>> raw;
  std::size_t k = 0;
  for (int d : sub.input_dims) {
    raw.emplace_back();
    for (int j = 0; j < d; ++j) raw.back().push_back(static_cast<double>(packed[k++]));
  }
  return sub.forward_raw(raw);
}

// Inputs come from `recorded` network-scale states when given, otherwise
// uniform in [-1, 1] at network scale. Deterministic per seed.
inline TestVectorSet emit_test_vectors(const SubGraph& sub, const CodegenOptions& opts, std::uint64_t seed,
                                       const std::vector<SubGraphInput>& recorded = {}) {
  detail::check_subgraph(sub);
  if (opts.test_vector_count < 0) throw ConfigError("codegen: negative test_vector_count");
  TestVectorSet set;
  set.input_dims = sub.input_dims;
  set.output_dim = sub.output_dim;
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int n = 0; n < opts.test_vector_count; ++n) {
    std::vector<float> x;
    const SubGraphInput* state =
        recorded.empty() ? nullptr : &recorded[std::uniform_int_distribution<std::size_t>(0, recorded.size() - 1)(rng)];
    for (std::size_t i = 0; i < sub.input_dims.size(); ++i) {
      const double scale = i < sub.input_scale.size() && sub.input_scale[i] != 0.0 ? sub.input_scale[i] : 1.0;
      for (int j = 0; j < sub.input_dims[i]; ++j)
        x.push_back(static_cast<float>((state ? state->at(i).at(j) : u(rng)) / scale));
    }
    const auto ref = reference_forward(sub, x);
    std::vector<float> rf(ref.begin(), ref.end());
    set.argmax.push_back(argmax(ref));
    set.reference.push_back(std::move(rf));
    set.inputs.push_back(std::move(x));
  }
  return set;
}

// Top-2 gap of a q-vector; infinite for a single output.
inline double top2_margin(std::span<const double> q) {
  if (q.size() < 2) return std::numeric_limits<double>::infinity();
  std::vector<double> s(q.begin(), q.end());
  std::partial_sort(s.begin(), s.begin() + 2, s.end(), std::greater<>());
  return s[0] - s[1];
}

}  // namespace tinylight
