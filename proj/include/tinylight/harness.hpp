#pragma once

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include <nlohmann/json.hpp>

#include "tinylight/codegen.hpp"

namespace tinylight {

class HarnessError : public Error {
 public:
  using Error::Error;
};

// Host driver for a generated forward pass. Compiled as one translation unit
// with the generated file via -include, so the model's macros are visible.
//   cc -std=c99 -DTL_PREFIX=tl -DTL_UPPER=TL [-DTL_Q15] -include model.c harness.c
//   ./harness vectors.txt tolerance [min_agreement] [--dump]
// Prints one JSON line; exit 0 pass, 1 error, 2 fail.
inline const char* harness_c_source() {
  return R"C(#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#define TL_CAT_(a, b) a##b
#define TL_CAT(a, b) TL_CAT_(a, b)
#define TL_FN(name) TL_CAT(TL_PREFIX, name)
#define TL_MACRO(name) TL_CAT(TL_UPPER, name)

#ifdef TL_Q15
typedef int16_t tl_value;
#else
typedef float tl_value;
#endif

static double tl_abs(double v)
{
    return v < 0.0 ? -v : v;
}

static int fail(const char *msg)
{
    printf("{\"error\":\"%s\"}\n", msg);
    return 1;
}

int main(int argc, char **argv)
{
    FILE *f;
    char magic[16], word[16];
    int version, n_in, d, total = 0, outputs, count, n, k, ref_arg, got, best, second;
    int mismatches = 0, decided = 0, agree = 0, dump = 0, pass;
    double tol, min_agreement = -1.0, max_diff = 0.0, diff, value, margin, agreement;
    float raw[TL_MACRO(_INPUT_TOTAL)];
    double ref[TL_MACRO(_OUTPUT_DIM)];
    tl_value x[TL_MACRO(_INPUT_TOTAL)], q[TL_MACRO(_OUTPUT_DIM)];

    if (argc < 3) return fail("usage: harness vectors tolerance [min_agreement] [--dump]");
    tol = atof(argv[2]);
    for (k = 3; k < argc; ++k) {
        if (strcmp(argv[k], "--dump") == 0) dump = 1;
        else min_agreement = atof(argv[k]);
    }
    f = fopen(argv[1], "r");
    if (!f) return fail("cannot open vector file");
    if (fscanf(f, "%15s %d", magic, &version) != 2 || strcmp(magic, "TLVEC") != 0 || version != 1)
        return fail("malformed vector file: header");
    if (fscanf(f, "%15s %d", word, &n_in) != 2 || strcmp(word, "inputs") != 0 || n_in != TL_MACRO(_NUM_INPUTS))
        return fail("malformed vector file: input count does not match the model");
    for (k = 0; k < n_in; ++k) {
        if (fscanf(f, "%d", &d) != 1 || d <= 0) return fail("malformed vector file: input dims");
        total += d;
    }
    if (total != TL_MACRO(_INPUT_TOTAL)) return fail("malformed vector file: input dims do not match the model");
    if (fscanf(f, "%15s %d", word, &outputs) != 2 || strcmp(word, "outputs") != 0 || outputs != TL_MACRO(_OUTPUT_DIM))
        return fail("malformed vector file: output dim does not match the model");
    if (fscanf(f, "%15s %d", word, &count) != 2 || strcmp(word, "count") != 0 || count < 0)
        return fail("malformed vector file: count");
    if (count == 0) fprintf(stderr, "warning: vector file holds no vectors\n");

    for (n = 0; n < count; ++n) {
        for (k = 0; k < total; ++k) {
            if (fscanf(f, "%lf", &value) != 1) return fail("malformed vector file: truncated inputs");
            raw[k] = (float)value;
        }
        for (k = 0; k < outputs; ++k)
            if (fscanf(f, "%lf", &ref[k]) != 1) return fail("malformed vector file: truncated outputs");
        if (fscanf(f, "%d", &ref_arg) != 1) return fail("malformed vector file: missing argmax");
#ifdef TL_Q15
        TL_FN(_quantize_inputs)(raw, x);
#else
        for (k = 0; k < total; ++k) x[k] = raw[k];
#endif
        TL_FN(_forward_packed)(x, q);
        best = 0;
        for (k = 0; k < outputs; ++k) {
#ifdef TL_Q15
            value = (double)q[k] * (double)TL_MACRO(_OUTPUT_SCALE);
#else
            value = (double)q[k];
#endif
            diff = tl_abs(value - ref[k]);
            if (diff > max_diff) max_diff = diff;
            if (q[k] > q[best]) best = k;
            if (dump) printf("%s%.9e", k ? " " : "", value);
        }
        if (dump) printf("\n");
        got = best;
        second = ref_arg == 0 ? 1 : 0;
        for (k = 0; k < outputs; ++k)
            if (k != ref_arg && ref[k] > ref[second]) second = k;
        margin = outputs > 1 ? ref[ref_arg] - ref[second] : 1.0;
        if (margin > 1e-4) {
            ++decided;
            if (got == ref_arg) ++agree;
            else ++mismatches;
        }
    }
    fclose(f);
    agreement = decided ? (double)agree / (double)decided : 1.0;
    pass = max_diff <= tol && (min_agreement >= 0.0 ? agreement >= min_agreement : mismatches == 0);
    printf("{\"vectors\":%d,\"max_abs_diff\":%.9e,\"argmax_mismatches\":%d,\"argmax_agreement\":%.6f,\"pass\":%s}\n",
           count, max_diff, mismatches, agreement, pass ? "true" : "false");
    return pass ? 0 : 2;
}
)C";
}

struct HarnessOptions {
  double tolerance = 1e-5;
  std::optional<double> min_agreement;  // replaces the zero-mismatch rule
  bool q15 = false;
  std::string prefix = "tl";
  std::string compiler = "cc";
  std::filesystem::path work_dir;  // defaults to a temp directory keyed by the inputs
  bool dump = false;
};

struct HarnessResult {
  int vectors = 0;
  double max_abs_diff = 0.0;
  int argmax_mismatches = 0;
  double argmax_agreement = 1.0;
  bool pass = false;
  std::string json;
  std::vector<std::vector<double>> outputs;  // with dump
};

namespace detail {

inline std::string shell_quote(const std::string& s) {
  std::string out = "'";
  for (char c : s) out += c == '\'' ? std::string("'\\''") : std::string(1, c);
  return out + "'";
}

inline int run_capture(const std::string& cmd, std::string& output) {
  output.clear();
  FILE* pipe = ::popen(cmd.c_str(), "r");
  if (!pipe) throw HarnessError("cannot run: " + cmd);
  std::array<char, 4096> buf{};
  std::size_t n = 0;
  while ((n = std::fread(buf.data(), 1, buf.size(), pipe)) > 0) output.append(buf.data(), n);
  const int status = ::pclose(pipe);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace detail

inline std::string harness_compile_flags() { return "-std=c99 -pedantic-errors -Wall -Wextra -Wconversion -Werror -O2"; }

// Compiles `source` with the harness driver and runs it over `vectors`.
// Throws HarnessError on compile failure (compiler output verbatim) or a
// malformed vector file.
inline HarnessResult run_harness(const std::filesystem::path& source, const std::filesystem::path& vectors,
                                 const HarnessOptions& opt = {}) {
  namespace fs = std::filesystem;
  if (!fs::exists(source)) throw HarnessError("generated source not found: " + source.string());
  if (!fs::exists(vectors)) throw HarnessError("vector file not found: " + vectors.string());
  detail::check_prefix(opt.prefix);
  fs::path dir = opt.work_dir;
  if (dir.empty()) {
    dir = fs::temp_directory_path() / ("tinylight-harness-" + hex64(fnv1a64(fs::absolute(source).string() + vectors.string())));
  }
  fs::create_directories(dir);
  const fs::path driver = dir / "harness.c", exe = dir / "harness";
  std::ofstream(driver) << harness_c_source();
  const std::string cmd = opt.compiler + " " + harness_compile_flags() + " -DTL_PREFIX=" + opt.prefix +
                          " -DTL_UPPER=" + detail::upper(opt.prefix) + (opt.q15 ? " -DTL_Q15" : "") + " -include " +
                          detail::shell_quote(fs::absolute(source).string()) + " " +
                          detail::shell_quote(driver.string()) + " -o " + detail::shell_quote(exe.string()) + " 2>&1";
  std::string out;
  if (detail::run_capture(cmd, out) != 0) throw HarnessError("compile failed:\n" + out);
  if (!out.empty()) throw HarnessError("compiler produced diagnostics:\n" + out);

  char tol[32];
  std::snprintf(tol, sizeof(tol), "%.17g", opt.tolerance);
  std::string run = detail::shell_quote(exe.string()) + " " + detail::shell_quote(vectors.string()) + " " + tol;
  if (opt.min_agreement) run += " " + std::to_string(*opt.min_agreement);
  if (opt.dump) run += " --dump";
  const int code = detail::run_capture(run + " 2>/dev/null", out);
  std::string last;
  std::vector<std::string> lines;
  for (std::size_t a = 0, b; a < out.size(); a = b + 1) {
    b = out.find('\n', a);
    if (b == std::string::npos) b = out.size();
    if (b > a) lines.push_back(out.substr(a, b - a));
  }
  if (lines.empty()) throw HarnessError("harness produced no output");
  HarnessResult r;
  r.json = lines.back();
  const auto j = nlohmann::json::parse(r.json);
  if (j.contains("error")) throw HarnessError(j["error"].get<std::string>());
  if (code != 0 && code != 2) throw HarnessError("harness exited with code " + std::to_string(code));
  r.vectors = j.at("vectors").get<int>();
  r.max_abs_diff = j.at("max_abs_diff").get<double>();
  r.argmax_mismatches = j.at("argmax_mismatches").get<int>();
  r.argmax_agreement = j.at("argmax_agreement").get<double>();
  r.pass = j.at("pass").get<bool>();
  for (std::size_t k = 0; k + 1 < lines.size(); ++k) {
    std::istringstream is(lines[k]);
    std::vector<double> row;
    for (double v; is >> v;) row.push_back(v);
    r.outputs.push_back(std::move(row));
  }
  return r;
}

}  // namespace tinylight
