// Copyright 2026 The cxr Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cxr/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <fmt/format.h>

#include "cxr/common.hpp"
#include "cxr/kernels.hpp"
#include "json.hpp"

namespace cxr {

namespace {

void check_matrix_pair(const Tensor& a, const Tensor& b, const char* who) {
  if (a.ndim() != 2 || b.ndim() != 2) {
    throw ValidationError(fmt::format("{}: expected (N, C) matrices, got {} and {}",
                                      who, a.shape_str(), b.shape_str()));
  }
  if (a.dim(0) != b.dim(0) || a.dim(1) != b.dim(1)) {
    throw ValidationError(fmt::format("{}: shape mismatch {} vs {}", who,
                                      a.shape_str(), b.shape_str()));
  }
  if (a.numel() == 0) {
    throw ValidationError(fmt::format("{}: empty input", who));
  }
}

bool target_at(const Tensor& targets, std::int64_t n, std::int64_t c,
               const char* who) {
  const float t = targets.data()[n * targets.dim(1) + c];
  if (t != 0.0f && t != 1.0f) {
    throw ValidationError(fmt::format(
        "{}: targets must be exactly 0 or 1, found {} at sample {}, class {}",
        who, t, n, c));
  }
  return t == 1.0f;
}

}  // namespace

F1Result f1_macro(const Tensor& probabilities, const Tensor& targets,
                  double threshold) {
  check_matrix_pair(probabilities, targets, "f1_macro");
  const std::int64_t n = probabilities.dim(0);
  const std::int64_t cc = probabilities.dim(1);

  F1Result res;
  res.per_class.resize(cc);
  double macro_sum = 0.0;
  for (std::int64_t c = 0; c < cc; ++c) {
    F1Class& cls = res.per_class[c];
    for (std::int64_t i = 0; i < n; ++i) {
      const float p = probabilities.data()[i * cc + c];
      if (!(p >= 0.0f && p <= 1.0f)) {
        throw ValidationError(fmt::format(
            "f1_macro: probability {} outside [0, 1] at sample {}, class {}",
            p, i, c));
      }
      const bool pred = p >= threshold;
      const bool pos = target_at(targets, i, c, "f1_macro");
      if (pred && pos) ++cls.tp;
      else if (pred && !pos) ++cls.fp;
      else if (!pred && pos) ++cls.fn;
      else ++cls.tn;
    }
    const std::int64_t denom = 2 * cls.tp + cls.fp + cls.fn;
    if (denom == 0) {
      cls.f1 = 0.0;
      cls.zero_division = true;
    } else {
      cls.f1 = static_cast<double>(2 * cls.tp) / static_cast<double>(denom);
    }
    macro_sum += cls.f1;
  }
  res.macro = macro_sum / static_cast<double>(cc);
  return res;
}

AucResult auc_macro(const Tensor& scores, const Tensor& targets) {
  check_matrix_pair(scores, targets, "auc_macro");
  const std::int64_t n = scores.dim(0);
  const std::int64_t cc = scores.dim(1);

  AucResult res;
  res.per_class.resize(cc);
  std::vector<std::int64_t> order(n);
  std::vector<double> rank(n);

  double macro_sum = 0.0;
  std::int64_t defined = 0;
  for (std::int64_t c = 0; c < cc; ++c) {
    AucClass& cls = res.per_class[c];
    for (std::int64_t i = 0; i < n; ++i) {
      const float s = scores.data()[i * cc + c];
      if (!std::isfinite(s)) {
        throw NumericalError(fmt::format(
            "auc_macro: non-finite score at sample {}, class {}", i, c));
      }
      if (target_at(targets, i, c, "auc_macro")) ++cls.support_pos;
      else ++cls.support_neg;
    }
    if (cls.support_pos == 0 || cls.support_neg == 0) {
      ++res.degenerate_classes;
      continue;
    }

    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::int64_t a, std::int64_t b) {
      return scores.data()[a * cc + c] < scores.data()[b * cc + c];
    });
    // 1-based ranks, tied scores sharing the mean rank of their run. Rank
    // sums of half-integers stay exact in double far beyond any realistic N.
    std::int64_t i = 0;
    while (i < n) {
      std::int64_t j = i;
      const float s = scores.data()[order[i] * cc + c];
      while (j < n && scores.data()[order[j] * cc + c] == s) ++j;
      const double mean_rank = 0.5 * static_cast<double>(i + 1 + j);
      for (std::int64_t k = i; k < j; ++k) rank[order[k]] = mean_rank;
      i = j;
    }
    double rank_pos = 0.0;
    for (std::int64_t k = 0; k < n; ++k) {
      if (target_at(targets, k, c, "auc_macro")) rank_pos += rank[k];
    }
    const double p = static_cast<double>(cls.support_pos);
    const double q = static_cast<double>(cls.support_neg);
    cls.auc = (rank_pos - p * (p + 1.0) * 0.5) / (p * q);
    cls.defined = true;
    macro_sum += cls.auc;
    ++defined;
  }
  if (defined == 0) {
    throw ValidationError(
        "auc_macro: every class has one-sided support; macro AUC is undefined");
  }
  res.macro = macro_sum / static_cast<double>(defined);
  return res;
}

EvalReport evaluate_logits(const std::string& model_name, const Tensor& logits,
                           const Tensor& targets, const LabelVocabulary& vocab,
                           const EvalOptions& options) {
  check_matrix_pair(logits, targets, "evaluate_logits");
  if (logits.dim(1) != static_cast<std::int64_t>(vocab.size())) {
    throw ValidationError(
        fmt::format("evaluate_logits: {} score columns but {} vocabulary classes",
                    logits.dim(1), vocab.size()));
  }

  EvalReport report;
  report.model_name = model_name;
  report.threshold = options.threshold;
  report.n_samples = logits.dim(0);
  report.bce_loss = bce_loss(logits, targets, Reduction::kMean);
  report.focal_loss = focal_loss(logits, targets, options.focal, Reduction::kMean);

  Tensor probs = logits;
  kern::sigmoid(probs.data(), probs.data(), probs.numel());
  const F1Result f1 = f1_macro(probs, targets, options.threshold);
  const AucResult auc = auc_macro(probs, targets);
  report.f1 = f1.macro;
  report.auc = auc.macro;

  report.per_class.resize(vocab.size());
  for (std::size_t c = 0; c < vocab.size(); ++c) {
    ClassReport& cls = report.per_class[c];
    cls.name = vocab.classes()[c];
    cls.f1 = f1.per_class[c].f1;
    cls.f1_zero_division = f1.per_class[c].zero_division;
    cls.auc = auc.per_class[c].auc;
    cls.auc_defined = auc.per_class[c].defined;
    cls.support_pos = auc.per_class[c].support_pos;
    cls.support_neg = auc.per_class[c].support_neg;
  }
  return report;
}

namespace {

nlohmann::json report_json(const EvalReport& r) {
  nlohmann::json j;
  j["model"] = r.model_name;
  j["bce_loss"] = r.bce_loss;
  j["focal_loss"] = r.focal_loss;
  j["f1"] = r.f1;
  j["auc"] = r.auc;
  j["threshold"] = r.threshold;
  j["n_samples"] = r.n_samples;
  j["per_class"] = nlohmann::json::array();
  for (const auto& c : r.per_class) {
    nlohmann::json jc;
    jc["class"] = c.name;
    jc["f1"] = c.f1;
    jc["f1_zero_division"] = c.f1_zero_division;
    if (c.auc_defined) jc["auc"] = c.auc;
    else jc["auc"] = nullptr;
    jc["support_pos"] = c.support_pos;
    jc["support_neg"] = c.support_neg;
    j["per_class"].push_back(std::move(jc));
  }
  return j;
}

}  // namespace

std::string report_to_json(const EvalReport& report) {
  return report_json(report).dump(2);
}

EvalReport report_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("evaluation report: invalid JSON: {}", e.what()));
  }
  try {
    EvalReport r;
    r.model_name = j.at("model").get<std::string>();
    r.bce_loss = j.at("bce_loss").get<double>();
    r.focal_loss = j.at("focal_loss").get<double>();
    r.f1 = j.at("f1").get<double>();
    r.auc = j.at("auc").get<double>();
    r.threshold = j.at("threshold").get<double>();
    r.n_samples = j.at("n_samples").get<std::int64_t>();
    for (const auto& jc : j.at("per_class")) {
      ClassReport c;
      c.name = jc.at("class").get<std::string>();
      c.f1 = jc.at("f1").get<double>();
      c.f1_zero_division = jc.at("f1_zero_division").get<bool>();
      if (!jc.at("auc").is_null()) {
        c.auc = jc.at("auc").get<double>();
        c.auc_defined = true;
      }
      c.support_pos = jc.at("support_pos").get<std::int64_t>();
      c.support_neg = jc.at("support_neg").get<std::int64_t>();
      r.per_class.push_back(std::move(c));
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(fmt::format("evaluation report: bad schema: {}", e.what()));
  }
}

void save_report_json(const EvalReport& report, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw FileError(fmt::format("cannot write report: {}", path));
  out << report_to_json(report) << "\n";
}

EvalReport load_report_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw FileError(fmt::format("cannot read report: {}", path));
  std::string text((std::istreambuf_iterator<char>(in)),
                   std::istreambuf_iterator<char>());
  return report_from_json(text);
}

namespace {

std::string render_rows(const std::vector<std::string>& header,
                        const std::vector<std::vector<std::string>>& rows) {
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) width[c] = header[c].size();
  for (const auto& row : rows)
    for (std::size_t c = 0; c < row.size(); ++c)
      width[c] = std::max(width[c], row[c].size());

  std::string out;
  auto emit = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) out += " | ";
      // First column (names) left-aligned, numeric columns right-aligned.
      out += c == 0 ? fmt::format("{:<{}}", row[c], width[c])
                    : fmt::format("{:>{}}", row[c], width[c]);
    }
    out += "\n";
  };
  emit(header);
  for (std::size_t c = 0; c < header.size(); ++c) {
    if (c) out += "-+-";
    out.append(width[c], '-');
  }
  out += "\n";
  for (const auto& row : rows) emit(row);
  return out;
}

}  // namespace

std::string render_metrics_table(const std::vector<EvalReport>& reports) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& r : reports) {
    rows.push_back({r.model_name, fmt::format("{:.4f}", r.bce_loss),
                    fmt::format("{:.4f}", r.focal_loss),
                    fmt::format("{:.4f}", r.f1), fmt::format("{:.4f}", r.auc)});
  }
  return render_rows({"Model", "BCE Loss", "F Loss", "F1-Score", "AUC"}, rows);
}

std::string render_per_class_table(const EvalReport& report) {
  std::vector<std::vector<std::string>> rows;
  for (const auto& c : report.per_class) {
    rows.push_back({c.name,
                    fmt::format("{:.4f}{}", c.f1, c.f1_zero_division ? "*" : ""),
                    c.auc_defined ? fmt::format("{:.4f}", c.auc) : "n/a",
                    fmt::format("{}", c.support_pos),
                    fmt::format("{}", c.support_neg)});
  }
  std::string out =
      render_rows({"Class", "F1-Score", "AUC", "Positives", "Negatives"}, rows);
  out += "(* zero-division convention applied; n/a = one-sided support)\n";
  return out;
}

}  // namespace cxr
