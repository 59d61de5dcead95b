#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "graphbert/model.hpp"

namespace graphbert {

// Adam with decoupled weight decay. Moments are kept in double and stored
// in checkpoints so training can resume exactly.
template <typename T>
struct AdamW {
  double lr = 1e-3;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t step_count = 0;
  std::vector<std::vector<double>> m, v;

  void attach(const ParamSet<T>& params) {
    m.clear();
    v.clear();
    for (const auto& t : params.tensors) {
      m.emplace_back(t.size(), 0.0);
      v.emplace_back(t.size(), 0.0);
    }
  }

  void step(ParamSet<T>& params) {
    if (m.size() != params.tensors.size()) attach(params);
    ++step_count;
    double bc1 = 1.0 - std::pow(beta1, double(step_count));
    double bc2 = 1.0 - std::pow(beta2, double(step_count));
    for (std::size_t p = 0; p < params.tensors.size(); ++p) {
      auto& t = params.tensors[p];
      auto& g = t.grad();
      auto& val = t.data();
      for (std::size_t i = 0; i < val.size(); ++i) {
        double gi = double(g[i]);
        if (std::isnan(gi))
          throw NumericError("NaN gradient in parameter '" + params.names[p] + "'");
        m[p][i] = beta1 * m[p][i] + (1.0 - beta1) * gi;
        v[p][i] = beta2 * v[p][i] + (1.0 - beta2) * gi * gi;
        double mhat = m[p][i] / bc1;
        double vhat = v[p][i] / bc2;
        double upd = mhat / (std::sqrt(vhat) + eps) + weight_decay * double(val[i]);
        val[i] = T(double(val[i]) - lr * upd);
      }
    }
  }
};

// Checkpoint file: u32 little-endian header length, JSON header (names,
// shapes, float offsets, optimizer step), then a concatenated f32
// little-endian payload: parameter values, then Adam m and v moments when
// present. No timestamps — a load/save round trip is byte-identical.
struct Checkpoint {
  std::size_t optimizer_step = 0;
  bool has_moments = false;
  std::vector<std::pair<std::string, Shape>> entries;
  std::vector<float> payload;
};

void write_checkpoint_file(const std::string& path, const Checkpoint& ckpt);
Checkpoint read_checkpoint_file(const std::string& path);

template <typename T>
void save_checkpoint(const std::string& path, const ParamSet<T>& params,
                     const AdamW<T>* opt = nullptr) {
  Checkpoint c;
  for (std::size_t p = 0; p < params.tensors.size(); ++p)
    c.entries.emplace_back(params.names[p], params.tensors[p].shape());
  for (const auto& t : params.tensors)
    for (T x : t.data()) c.payload.push_back(float(x));
  if (opt && opt->m.size() == params.tensors.size()) {
    c.has_moments = true;
    c.optimizer_step = opt->step_count;
    for (const auto& mv : opt->m)
      for (double x : mv) c.payload.push_back(float(x));
    for (const auto& vv : opt->v)
      for (double x : vv) c.payload.push_back(float(x));
  }
  write_checkpoint_file(path, c);
}

struct TransferReport {
  std::vector<std::string> loaded, missing, unexpected, mismatched;
};

// Name-based parameter transfer. strict=true throws when anything is
// missing or shape-mismatched; strict=false loads the intersection (fresh
// task heads stay at their initialization).
template <typename T>
TransferReport load_checkpoint(const std::string& path, ParamSet<T>& params,
                               AdamW<T>* opt = nullptr, bool strict = true) {
  Checkpoint c = read_checkpoint_file(path);
  TransferReport report;
  std::vector<std::size_t> offsets(c.entries.size() + 1, 0);
  for (std::size_t e = 0; e < c.entries.size(); ++e)
    offsets[e + 1] = offsets[e] + numel(c.entries[e].second);
  std::size_t param_total = offsets.back();

  std::vector<bool> used(c.entries.size(), false);
  bool full_match = c.entries.size() == params.tensors.size();
  for (std::size_t p = 0; p < params.tensors.size(); ++p) {
    bool found = false;
    for (std::size_t e = 0; e < c.entries.size(); ++e) {
      if (c.entries[e].first != params.names[p]) continue;
      found = true;
      used[e] = true;
      if (c.entries[e].second != params.tensors[p].shape()) {
        report.mismatched.push_back(params.names[p] + ": checkpoint " +
                                    shape_str(c.entries[e].second) + " vs model " +
                                    shape_str(params.tensors[p].shape()));
        full_match = false;
      } else {
        auto& val = params.tensors[p].data();
        for (std::size_t i = 0; i < val.size(); ++i) val[i] = T(c.payload[offsets[e] + i]);
        report.loaded.push_back(params.names[p]);
        if (opt && c.has_moments && full_match && e == p) {
          if (opt->m.size() != params.tensors.size()) opt->attach(params);
          for (std::size_t i = 0; i < val.size(); ++i) {
            opt->m[p][i] = double(c.payload[param_total + offsets[e] + i]);
            opt->v[p][i] = double(c.payload[2 * param_total + offsets[e] + i]);
          }
        }
      }
      break;
    }
    if (!found) {
      report.missing.push_back(params.names[p]);
      full_match = false;
    }
  }
  for (std::size_t e = 0; e < c.entries.size(); ++e)
    if (!used[e]) report.unexpected.push_back(c.entries[e].first);
  if (opt && c.has_moments && full_match) opt->step_count = c.optimizer_step;

  if (strict && (!report.missing.empty() || !report.mismatched.empty())) {
    std::string msg = "checkpoint transfer failed for " + path + ":";
    for (const auto& s : report.missing) msg += " missing[" + s + "]";
    for (const auto& s : report.mismatched) msg += " mismatch[" + s + "]";
    throw ConfigError(msg);
  }
  return report;
}

}  // namespace graphbert
