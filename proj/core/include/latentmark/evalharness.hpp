#pragma once

// Robustness evaluation: attack grids, TPR / BER / WER tables, Monte-Carlo
// validation of the false positive rate, CSV and SVG reports.

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latentmark/attacks.hpp"
#include "latentmark/features.hpp"
#include "latentmark/keys.hpp"

namespace latentmark {

struct EvalRow {
  AttackSpec attack;
  std::string metric;  // tpr | ber | wer | wer_iid | wer_below_iid
  double value = 0.0;
  std::size_t n = 0;

  friend bool operator==(const EvalRow&, const EvalRow&) = default;
};

using EvalTable = std::vector<EvalRow>;

/// Default attack grid mirroring the usual robustness table.
std::vector<AttackSpec> default_attack_grid();

/// Per attack: fraction of attacked marked images on which detection fires.
EvalTable evaluate_zero_bit(const FeatureModel& model, const std::vector<Image>& marked, const ZeroBitKey& key,
                            double theta, const std::vector<AttackSpec>& attacks, int jobs = 1);

/// Per attack: BER, WER, the iid prediction 1 - (1 - BER)^k and a 0/1 flag
/// set when the observed WER is below that prediction.
EvalTable evaluate_multi_bit(const FeatureModel& model, const std::vector<Image>& marked, const MultiBitKey& key,
                             const std::vector<Message>& messages, const std::vector<AttackSpec>& attacks,
                             int jobs = 1);

/// Fraction of n uniform unit vectors u with |u^T a| > cos(theta), for a
/// carrier drawn from `seed`. Chunked with per-chunk RNG streams, so the
/// result is independent of `jobs`.
double monte_carlo_fpr(int d, double theta, std::uint64_t n, std::uint64_t seed, int jobs = 1);

/// CSV with header attack,param,metric,value,n (C locale, shortest round-trip decimals).
void write_report(const EvalTable& table, const std::filesystem::path& path);
std::string format_report(const EvalTable& table);
EvalTable parse_report(const std::string& csv);
EvalTable read_report(const std::filesystem::path& path);

/// SVG line chart of `metric` against the attack parameter, one series per attack kind.
void write_svg_plot(const EvalTable& table, const std::string& metric, const std::filesystem::path& path);

}  // namespace latentmark
