#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace sotkit {

using WordStream = std::vector<std::string>;

// Instance too large for the requested algorithm.
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class EditOp { kMatch, kSubstitution, kDeletion, kInsertion };

struct AlignStep {
  EditOp op;
  std::optional<size_t> hyp_index;
  size_t ref_stream = 0;  // meaningless for insertions
  std::optional<size_t> ref_index;
};

struct AlignmentResult {
  int64_t substitutions = 0;
  int64_t deletions = 0;
  int64_t insertions = 0;
  int64_t matches = 0;
  int64_t ref_words = 0;
  int64_t hyp_words = 0;
  std::vector<AlignStep> trace;

  int64_t errors() const { return substitutions + deletions + insertions; }
  // errors / ref_words; with an empty reference the denominator is 1.
  double wer() const {
    return double(errors()) / double(ref_words > 0 ? ref_words : 1);
  }
};

// Alignments are ranked by (errors, substitutions): among minimum-edit
// alignments the one with the most matched words wins. With hyp and ref
// lengths fixed this pins S, D and I uniquely, so any two optimal aligners
// agree on the counts. The trace prefers match > sub > del > ins on ties.
AlignmentResult Wer(const WordStream& hyp, const WordStream& ref);

struct SagwerOptions {
  size_t max_streams = 4;
  // Dense DP tables above this many states are refused.
  uint64_t max_states = 20'000'000;
  // 0 = exact. Otherwise keep only the best `beam` states per anti-diagonal.
  size_t beam = 0;
};

// Speaker-agnostic WER: minimum over all interleavings of the reference
// streams (each stream's order preserved) of the edit distance to hyp, via a
// dynamic program over (hyp position, position in each stream).
AlignmentResult Sagwer(const WordStream& hyp,
                       const std::vector<WordStream>& refs,
                       const SagwerOptions& options = {});

// Enumerates every interleaving and scores each with Wer(). Refuses more than
// max_interleavings interleavings.
AlignmentResult SagwerBruteforce(const WordStream& hyp,
                                 const std::vector<WordStream>& refs,
                                 uint64_t max_interleavings = 100'000);

// Number of distinct interleavings (multinomial coefficient), saturating.
uint64_t CountInterleavings(const std::vector<WordStream>& refs);

// Unweighted mean over conditions. Throws std::invalid_argument when empty.
double MacroAverage(const std::map<std::string, double>& per_condition);

struct AverageCheck {
  double computed = 0.0;
  double reported = 0.0;
  bool consistent = true;
  std::string note;
};

// Compares a published average against the mean of its components, allowing
// for rounding to `decimals` places.
AverageCheck CheckReportedAverage(const std::map<std::string, double>& values,
                                  double reported, int decimals = 2);

}  // namespace sotkit
