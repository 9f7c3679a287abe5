#include "sotkit/score.h"

#include <fmt/format.h>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <unordered_map>

namespace sotkit {

namespace {

// (errors, substitutions) packed so that integer order is lexicographic
// order and integer addition adds both fields.
using Cost = int64_t;
constexpr Cost kSubShift = 1;
constexpr Cost kErrShift = Cost{1} << 32;
constexpr Cost kMatchCost = 0;
constexpr Cost kSubCost = kErrShift + kSubShift;
constexpr Cost kGapCost = kErrShift;  // insertion or deletion
constexpr Cost kUnreached = std::numeric_limits<Cost>::max();

int Rank(EditOp op) { return static_cast<int>(op); }

void CountSteps(AlignmentResult& r) {
  r.substitutions = r.deletions = r.insertions = r.matches = 0;
  for (const auto& s : r.trace) {
    switch (s.op) {
      case EditOp::kMatch: ++r.matches; break;
      case EditOp::kSubstitution: ++r.substitutions; break;
      case EditOp::kDeletion: ++r.deletions; break;
      case EditOp::kInsertion: ++r.insertions; break;
    }
  }
}

}  // namespace

AlignmentResult Wer(const WordStream& hyp, const WordStream& ref) {
  const size_t h = hyp.size(), r = ref.size();
  const size_t cols = r + 1;
  std::vector<Cost> cost((h + 1) * cols);
  auto at = [&](size_t i, size_t j) -> Cost& { return cost[i * cols + j]; };
  for (size_t j = 0; j <= r; ++j) at(0, j) = Cost(j) * kGapCost;
  for (size_t i = 1; i <= h; ++i) {
    at(i, 0) = Cost(i) * kGapCost;
    for (size_t j = 1; j <= r; ++j) {
      const Cost diag =
          at(i - 1, j - 1) + (hyp[i - 1] == ref[j - 1] ? kMatchCost : kSubCost);
      at(i, j) = std::min({diag, at(i, j - 1) + kGapCost,
                           at(i - 1, j) + kGapCost});
    }
  }

  AlignmentResult out;
  out.ref_words = static_cast<int64_t>(r);
  out.hyp_words = static_cast<int64_t>(h);
  size_t i = h, j = r;
  while (i > 0 || j > 0) {
    const Cost here = at(i, j);
    if (i > 0 && j > 0) {
      const bool same = hyp[i - 1] == ref[j - 1];
      if (here == at(i - 1, j - 1) + (same ? kMatchCost : kSubCost)) {
        out.trace.push_back({same ? EditOp::kMatch : EditOp::kSubstitution,
                             i - 1, 0, j - 1});
        --i, --j;
        continue;
      }
    }
    if (j > 0 && here == at(i, j - 1) + kGapCost) {
      out.trace.push_back({EditOp::kDeletion, std::nullopt, 0, j - 1});
      --j;
      continue;
    }
    out.trace.push_back({EditOp::kInsertion, i - 1, 0, std::nullopt});
    --i;
  }
  std::reverse(out.trace.begin(), out.trace.end());
  CountSteps(out);
  return out;
}

namespace {

struct Lattice {
  std::vector<size_t> dims;     // hyp length + 1, then each stream length + 1
  std::vector<size_t> strides;  // mixed radix, last dimension fastest
  long double states = 1;

  explicit Lattice(const WordStream& hyp, const std::vector<WordStream>& refs) {
    dims.push_back(hyp.size() + 1);
    for (const auto& s : refs) dims.push_back(s.size() + 1);
    strides.assign(dims.size(), 1);
    for (size_t d = dims.size() - 1; d > 0; --d)
      strides[d - 1] = strides[d] * dims[d];
    for (size_t d : dims) states *= static_cast<long double>(d);
  }
};

// Back pointer: op in the low 2 bits, reference stream above.
uint8_t PackBack(EditOp op, size_t stream) {
  return static_cast<uint8_t>(Rank(op) | (stream << 2));
}
EditOp BackOp(uint8_t b) { return static_cast<EditOp>(b & 3); }
size_t BackStream(uint8_t b) { return b >> 2; }

AlignmentResult Backtrace(const WordStream& hyp,
                          const std::vector<WordStream>& refs,
                          const Lattice& lat,
                          const std::function<uint8_t(size_t)>& back_of) {
  const size_t k_streams = refs.size();
  std::vector<size_t> pos(k_streams + 1);
  pos[0] = hyp.size();
  for (size_t k = 0; k < k_streams; ++k) pos[k + 1] = refs[k].size();
  size_t idx = 0;
  for (size_t d = 0; d < pos.size(); ++d) idx += pos[d] * lat.strides[d];

  AlignmentResult out;
  out.hyp_words = static_cast<int64_t>(hyp.size());
  for (const auto& s : refs) out.ref_words += static_cast<int64_t>(s.size());
  while (idx != 0) {
    const uint8_t b = back_of(idx);
    const EditOp op = BackOp(b);
    const size_t k = BackStream(b);
    switch (op) {
      case EditOp::kMatch:
      case EditOp::kSubstitution:
        out.trace.push_back({op, pos[0] - 1, k, pos[k + 1] - 1});
        --pos[0], --pos[k + 1];
        idx -= lat.strides[0] + lat.strides[k + 1];
        break;
      case EditOp::kDeletion:
        out.trace.push_back({op, std::nullopt, k, pos[k + 1] - 1});
        --pos[k + 1];
        idx -= lat.strides[k + 1];
        break;
      case EditOp::kInsertion:
        out.trace.push_back({op, pos[0] - 1, 0, std::nullopt});
        --pos[0];
        idx -= lat.strides[0];
        break;
    }
  }
  std::reverse(out.trace.begin(), out.trace.end());
  CountSteps(out);
  return out;
}

AlignmentResult SagwerDense(const WordStream& hyp,
                            const std::vector<WordStream>& refs,
                            const Lattice& lat) {
  const size_t total = static_cast<size_t>(lat.states);
  const size_t k_streams = refs.size();
  std::vector<Cost> cost(total, kUnreached);
  std::vector<uint8_t> back(total, 0);
  std::vector<size_t> pos(k_streams + 1, 0);  // coordinates of idx

  cost[0] = 0;
  for (size_t idx = 0; idx < total; ++idx) {
    if (idx > 0) {
      // Advance the mixed-radix counter.
      for (size_t d = pos.size(); d-- > 0;) {
        if (++pos[d] < lat.dims[d]) break;
        pos[d] = 0;
      }
      const size_t i = pos[0];
      Cost best = kUnreached;
      uint8_t best_back = 0;
      auto offer = [&](Cost c, EditOp op, size_t k) {
        if (c < best) {
          best = c;
          best_back = PackBack(op, k);
        }
      };
      // Candidates in preference order: match, sub, del, ins; low stream
      // first. Only strictly better candidates replace earlier ones.
      if (i > 0) {
        for (size_t k = 0; k < k_streams; ++k)
          if (pos[k + 1] > 0 && hyp[i - 1] == refs[k][pos[k + 1] - 1])
            offer(cost[idx - lat.strides[0] - lat.strides[k + 1]],
                  EditOp::kMatch, k);
        for (size_t k = 0; k < k_streams; ++k)
          if (pos[k + 1] > 0 && hyp[i - 1] != refs[k][pos[k + 1] - 1])
            offer(cost[idx - lat.strides[0] - lat.strides[k + 1]] + kSubCost,
                  EditOp::kSubstitution, k);
      }
      for (size_t k = 0; k < k_streams; ++k)
        if (pos[k + 1] > 0)
          offer(cost[idx - lat.strides[k + 1]] + kGapCost, EditOp::kDeletion,
                k);
      if (i > 0)
        offer(cost[idx - lat.strides[0]] + kGapCost, EditOp::kInsertion, 0);
      cost[idx] = best;
      back[idx] = best_back;
    }
  }
  return Backtrace(hyp, refs, lat,
                   [&](size_t idx) { return back[idx]; });
}

// Beam search over anti-diagonals d = i + sum(j). Every transition advances d
// by 1 (insertion, deletion) or 2 (match, substitution), so diagonal d is
// final once d-1 and d-2 have been expanded.
AlignmentResult SagwerBeam(const WordStream& hyp,
                           const std::vector<WordStream>& refs,
                           const Lattice& lat, size_t beam) {
  struct Node {
    Cost cost;
    int rank;  // preference of the incoming edge, lower wins ties
    uint8_t back;
  };
  const size_t k_streams = refs.size();
  size_t last_diag = hyp.size();
  for (const auto& s : refs) last_diag += s.size();
  std::vector<std::unordered_map<size_t, Node>> diags(last_diag + 1);
  diags[0][0] = {0, 0, 0};

  auto relax = [&](size_t d, size_t idx, Cost c, EditOp op, size_t k) {
    const int rank = Rank(op) * 64 + static_cast<int>(k);
    auto [it, inserted] = diags[d].try_emplace(idx, Node{c, rank, 0});
    if (inserted || c < it->second.cost ||
        (c == it->second.cost && rank < it->second.rank)) {
      it->second = {c, rank, PackBack(op, k)};
    }
  };

  std::vector<size_t> pos(k_streams + 1);
  for (size_t d = 0; d <= last_diag; ++d) {
    auto& here = diags[d];
    if (here.size() > beam) {
      std::vector<std::pair<Cost, size_t>> order;
      order.reserve(here.size());
      for (const auto& [idx, node] : here) order.emplace_back(node.cost, idx);
      std::nth_element(order.begin(), order.begin() + beam, order.end());
      std::unordered_map<size_t, Node> kept;
      for (size_t n = 0; n < beam; ++n) kept.emplace(order[n].second,
                                                     here.at(order[n].second));
      here = std::move(kept);
    }
    for (const auto& [idx, node] : here) {
      size_t rem = idx;
      for (size_t q = 0; q < pos.size(); ++q) {
        pos[q] = rem / lat.strides[q];
        rem %= lat.strides[q];
      }
      const size_t i = pos[0];
      for (size_t k = 0; k < k_streams; ++k) {
        const size_t j = pos[k + 1];
        if (j >= refs[k].size()) continue;
        relax(d + 1, idx + lat.strides[k + 1], node.cost + kGapCost,
              EditOp::kDeletion, k);
        if (i < hyp.size()) {
          const bool same = hyp[i] == refs[k][j];
          relax(d + 2, idx + lat.strides[0] + lat.strides[k + 1],
                node.cost + (same ? kMatchCost : kSubCost),
                same ? EditOp::kMatch : EditOp::kSubstitution, k);
        }
      }
      if (i < hyp.size())
        relax(d + 1, idx + lat.strides[0], node.cost + kGapCost,
              EditOp::kInsertion, 0);
    }
  }
  return Backtrace(hyp, refs, lat, [&](size_t idx) {
    size_t rem = idx, d = 0;
    for (size_t q = 0; q < lat.strides.size(); ++q) {
      d += rem / lat.strides[q];
      rem %= lat.strides[q];
    }
    return diags[d].at(idx).back;
  });
}

}  // namespace

AlignmentResult Sagwer(const WordStream& hyp,
                       const std::vector<WordStream>& refs,
                       const SagwerOptions& options) {
  if (refs.empty()) throw std::invalid_argument("sagwer needs >= 1 reference");
  const Lattice lat(hyp, refs);
  if (refs.size() > options.max_streams) {
    throw CapacityError(fmt::format(
        "{} reference streams exceed the limit of {} (the full table would "
        "need {:.3g} states)",
        refs.size(), options.max_streams, static_cast<double>(lat.states)));
  }
  if (refs.size() > 63)
    throw CapacityError("more than 63 reference streams are not supported");
  if (options.beam > 0) return SagwerBeam(hyp, refs, lat, options.beam);
  if (lat.states > static_cast<long double>(options.max_states)) {
    throw CapacityError(fmt::format(
        "alignment needs {:.3g} DP states (limit {}); use a beam or shorter "
        "references",
        static_cast<double>(lat.states), options.max_states));
  }
  return SagwerDense(hyp, refs, lat);
}

uint64_t CountInterleavings(const std::vector<WordStream>& refs) {
  // Product of binomials C(n_1 + ... + n_k, n_k), saturating.
  unsigned __int128 total = 1;
  uint64_t placed = 0;
  for (const auto& s : refs) {
    unsigned __int128 binom = 1;
    for (uint64_t t = 1; t <= s.size(); ++t) {
      binom = binom * (placed + t) / t;
      if (binom > std::numeric_limits<uint64_t>::max())
        return std::numeric_limits<uint64_t>::max();
    }
    placed += s.size();
    total *= binom;
    if (total > std::numeric_limits<uint64_t>::max())
      return std::numeric_limits<uint64_t>::max();
  }
  return static_cast<uint64_t>(total);
}

AlignmentResult SagwerBruteforce(const WordStream& hyp,
                                 const std::vector<WordStream>& refs,
                                 uint64_t max_interleavings) {
  if (refs.empty()) throw std::invalid_argument("sagwer needs >= 1 reference");
  const uint64_t count = CountInterleavings(refs);
  if (count > max_interleavings)
    throw CapacityError(fmt::format(
        "{} interleavings exceed the brute-force limit of {}", count,
        max_interleavings));

  size_t total = 0;
  for (const auto& s : refs) total += s.size();
  WordStream seq;
  std::vector<std::pair<size_t, size_t>> origin;  // (stream, index)
  seq.reserve(total);
  origin.reserve(total);
  std::vector<size_t> next(refs.size(), 0);

  std::optional<AlignmentResult> best;
  std::vector<std::pair<size_t, size_t>> best_origin;
  std::function<void()> recurse = [&]() {
    if (seq.size() == total) {
      AlignmentResult r = Wer(hyp, seq);
      if (!best ||
          std::pair(r.errors(), r.substitutions) <
              std::pair(best->errors(), best->substitutions)) {
        best = std::move(r);
        best_origin = origin;
      }
      return;
    }
    for (size_t k = 0; k < refs.size(); ++k) {
      if (next[k] == refs[k].size()) continue;
      seq.push_back(refs[k][next[k]]);
      origin.emplace_back(k, next[k]);
      ++next[k];
      recurse();
      --next[k];
      origin.pop_back();
      seq.pop_back();
    }
  };
  recurse();

  for (auto& step : best->trace) {
    if (step.ref_index) {
      const auto [k, j] = best_origin[*step.ref_index];
      step.ref_stream = k;
      step.ref_index = j;
    }
  }
  return *best;
}

double MacroAverage(const std::map<std::string, double>& per_condition) {
  if (per_condition.empty())
    throw std::invalid_argument("macro average of no conditions");
  double sum = 0.0;
  for (const auto& [_, v] : per_condition) sum += v;
  return sum / double(per_condition.size());
}

AverageCheck CheckReportedAverage(const std::map<std::string, double>& values,
                                  double reported, int decimals) {
  AverageCheck check;
  check.computed = MacroAverage(values);
  check.reported = reported;
  const double half_ulp = 0.5 * std::pow(10.0, -decimals);
  check.consistent = std::abs(check.computed - reported) <= half_ulp + 1e-9;
  if (!check.consistent) {
    check.note = fmt::format(
        "reported average {:.{}f} differs from the mean of its {} values "
        "({:.4f}) by {:+.4f}",
        reported, decimals, values.size(), check.computed,
        reported - check.computed);
  }
  return check;
}

}  // namespace sotkit
