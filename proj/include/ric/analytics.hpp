#pragma once

// Quantitative model of system-prompt influence under periodic injection,
// in exact rational arithmetic:
//
//   - training_examples_lower_bound: the exponential coverage curve c*k^l
//     (illustrative; k and c are caller-supplied).
//   - baseline_ratio:      s_p / l            — decays to 0 with l.
//   - analytic_ratio:      s_p / l + s_i / t  — the injected share when the
//     schedule is counted against the organic length l.
//   - asymptotic_ratio:    s_i / t            — its limit.
//   - measured_asymptote:  s_i / (t + s_i)    — the limit when injected
//     tokens also count in the denominator, which is what a real context
//     physically measures.
//   - verify_lower_bound:  certifies ratio > q for all l in range, with the
//     smallest violating l as witness on failure.
//   - sweep: evaluates all of the above over a parameter grid; the measured
//     column is computed by actually building a context through the
//     injection engine and asking for its system share, never by formula.

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "ric/context.hpp"
#include "ric/engine.hpp"
#include "ric/errors.hpp"
#include "ric/policy.hpp"
#include "ric/rational.hpp"
#include "ric/tokens.hpp"

namespace ric {

// Growth parameters for the coverage curve: base k > 1, scale c > 0.
struct ScalingParams {
  ScalingParams(Rational k_, Rational c_) : k(std::move(k_)), c(std::move(c_)) {
    if (!(k > Rational(1))) throw InvariantError("scaling base k must be > 1");
    if (!(c > Rational(0))) throw InvariantError("scaling constant c must be > 0");
  }
  Rational k;
  Rational c;
};

inline constexpr std::uint64_t kDefaultExponentCap = 120;

// c * k^l, exact. Exceeding the exponent cap (or the representable range)
// raises MagnitudeOverflowError; a wrong value is never returned.
inline Rational training_examples_lower_bound(TokenCount l, const ScalingParams& p,
                                              std::uint64_t exponent_cap = kDefaultExponentCap) {
  return p.c * pow_checked(p.k, l, exponent_cap);
}

inline Rational baseline_ratio(TokenCount s_p, TokenCount l) {
  if (l == 0) throw UndefinedRatioError("baseline ratio over zero-length context");
  return Rational(Int128(s_p), Int128(l));
}

// Schedule parameters: system prompt length, interruption length, interval.
struct RatioParams {
  RatioParams(TokenCount s_p_, TokenCount s_i_, TokenCount t_) : s_p(s_p_), s_i(s_i_), t(t_) {
    if (t == 0) throw InvariantError("interval t must be >= 1");
    if (s_i == 0) throw InvariantError("interruption length s_i must be >= 1");
  }
  TokenCount s_p;
  TokenCount s_i;
  TokenCount t;
};

inline Rational analytic_ratio(const RatioParams& p, TokenCount l) {
  if (l == 0) throw UndefinedRatioError("analytic ratio over zero-length context");
  return Rational(Int128(p.s_p), Int128(l)) + Rational(Int128(p.s_i), Int128(p.t));
}

inline Rational asymptotic_ratio(const RatioParams& p) {
  return Rational(Int128(p.s_i), Int128(p.t));
}

inline Rational measured_asymptote(const RatioParams& p) {
  return Rational(Int128(p.s_i), Int128(p.t + p.s_i));
}

struct BoundVerdict {
  bool passed = false;
  // On failure, the smallest l at which the claimed bound stops holding
  // (it may exceed the scanned range when q overshoots the asymptote).
  std::optional<TokenCount> witness_l;
};

// Certifies analytic_ratio(p, l) > q for all 1 <= l <= l_max and q <= s_i/t.
//
// The ratio s_p/l + s_i/t is non-increasing in l with infimum s_i/t, so the
// scan has a closed form: any q below the asymptote (or equal to it with
// s_p > 0) holds everywhere; otherwise the first violation is the smallest
// integer l with s_p/l <= q - s_i/t. Unit tests cross-check this against a
// literal sweep.
inline BoundVerdict verify_lower_bound(const RatioParams& p, const Rational& q,
                                       TokenCount l_max) {
  if (l_max == 0) throw InvariantError("l_max must be >= 1");
  Rational gap = q - asymptotic_ratio(p);
  if (gap.sign() < 0) return BoundVerdict{true, std::nullopt};
  if (gap.is_zero()) {
    if (p.s_p > 0) return BoundVerdict{true, std::nullopt};
    return BoundVerdict{false, 1};
  }
  if (p.s_p == 0) return BoundVerdict{false, 1};
  Rational first = Rational(Int128(p.s_p)) / gap;  // smallest real l violating
  Int128 w = first.num() / first.den();
  if (Rational(w) < first) w += 1;
  if (w < 1) w = 1;
  if (w > Int128(std::numeric_limits<TokenCount>::max()))
    throw MagnitudeOverflowError("lower-bound witness exceeds representable token counts");
  return BoundVerdict{false, TokenCount(w)};
}

// Deterministic text of exactly `n` tokens under the default rule:
// "p0 p1 p2 ...".
inline std::string synthetic_token_text(TokenCount n, const std::string& prefix = "w") {
  std::string out;
  out.reserve(std::size_t(n) * (prefix.size() + 8));
  for (TokenCount i = 0; i < n; ++i) {
    if (i > 0) out.push_back(' ');
    out += prefix;
    out += std::to_string(i);
  }
  return out;
}

// Builds a real context — system prompt, user turns split at the interval,
// Interruption messages inserted by the engine — and returns its measured
// system share. The construction uses whitespace sentinel markers, which
// carry zero tokens under the default rule, so each injected message is
// exactly s_i tokens and the measured column is comparable to the analytic
// one.
inline Rational measured_share_by_construction(TokenCount s_p, TokenCount s_i, TokenCount t,
                                               TokenCount l) {
  InterruptionPolicy policy;
  policy.interval_tokens = t;
  policy.default_text = synthetic_token_text(s_i, "r");
  policy.mode = InjectionMode::TurnLevel;
  policy.sentinel_open = "\t";
  policy.sentinel_close = "\v";
  Context ctx;
  if (s_p > 0) ctx.add(Message::make(Role::SystemPrompt, synthetic_token_text(s_p, "s")));
  for (auto& seg : split_at_intervals(synthetic_token_text(l, "u"), t))
    ctx.add(Message::make(Role::User, std::move(seg.text)));
  TurnInjection injected = inject_turns(ctx, policy, 0);
  return system_share(injected.context).measured_ratio;
}

struct SweepGrid {
  std::vector<TokenCount> s_p;
  std::vector<TokenCount> s_i;
  std::vector<TokenCount> t;
  std::vector<TokenCount> l;
};

struct SweepRow {
  TokenCount s_p = 0;
  TokenCount s_i = 0;
  TokenCount t = 0;
  TokenCount l = 0;
  Rational baseline;
  Rational analytic;
  Rational measured;
  Rational asymptote;
  Rational measured_asymptote;
};

// One row per grid combination, ordered s_p-major / l-minor. Every point
// must satisfy the type invariants (t >= 1, s_i >= 1, l >= 1); the first
// offending point is reported.
inline std::vector<SweepRow> sweep(const SweepGrid& grid) {
  if (grid.s_p.empty() || grid.s_i.empty() || grid.t.empty() || grid.l.empty())
    throw InvariantError("sweep grid must list at least one value per parameter");
  std::vector<SweepRow> rows;
  rows.reserve(grid.s_p.size() * grid.s_i.size() * grid.t.size() * grid.l.size());
  for (TokenCount s_p : grid.s_p)
    for (TokenCount s_i : grid.s_i)
      for (TokenCount t : grid.t)
        for (TokenCount l : grid.l) {
          auto point = [&] {
            return "grid point (s_p=" + std::to_string(s_p) + ", s_i=" + std::to_string(s_i) +
                   ", t=" + std::to_string(t) + ", l=" + std::to_string(l) + ")";
          };
          if (t == 0 || s_i == 0 || l == 0)
            throw InvariantError(point() + " violates parameter invariants");
          RatioParams p(s_p, s_i, t);
          SweepRow row;
          row.s_p = s_p;
          row.s_i = s_i;
          row.t = t;
          row.l = l;
          row.baseline = baseline_ratio(s_p, l);
          row.analytic = analytic_ratio(p, l);
          row.measured = measured_share_by_construction(s_p, s_i, t, l);
          row.asymptote = asymptotic_ratio(p);
          row.measured_asymptote = measured_asymptote(p);
          rows.push_back(std::move(row));
        }
  return rows;
}

inline constexpr const char* kSweepCsvHeader =
    "s_p,s_i,t,l,baseline,analytic,measured,asymptote,measured_asymptote";

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out = kSweepCsvHeader;
  out.push_back('\n');
  for (const auto& r : rows) {
    out += std::to_string(r.s_p) + "," + std::to_string(r.s_i) + "," + std::to_string(r.t) +
           "," + std::to_string(r.l) + "," + to_decimal_string(r.baseline) + "," +
           to_decimal_string(r.analytic) + "," + to_decimal_string(r.measured) + "," +
           to_decimal_string(r.asymptote) + "," + to_decimal_string(r.measured_asymptote);
    out.push_back('\n');
  }
  return out;
}

// Full report for a context whose policy parameters are known: measured
// share, the analytic ratio at the context's organic length, and the
// certified bound q = (s_i/t)/2 (verified by verify_lower_bound, which
// holds for every s_p >= 0).
inline RatioReport ratio_report(const Context& context, const RatioParams& p) {
  RatioReport report = system_share(context);
  TokenCount l_ext = external_length(context);
  if (l_ext > 0) report.analytic_ratio = analytic_ratio(p, l_ext);
  report.bound_q = asymptotic_ratio(p) / Rational(2);
  return report;
}

}  // namespace ric
