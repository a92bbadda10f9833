#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "psnlab/policy.hpp"

namespace psnlab {

// Closed token grammar shared by both environments. Digits compose multi-token
// numbers positionally (most significant digit first).
namespace tok {
inline constexpr int D0 = 0;  // digits are ids 0..9
inline constexpr int kPlus = 10;       // ModChain '+'
inline constexpr int kMul = 11;        // ModChain '*'
inline constexpr int kArrow = 12;      // step result marker in "a op b -> c"
inline constexpr int kAns = 13;
inline constexpr int kEos = 14;
inline constexpr int kSep = 15;
inline constexpr int kBosModChain = 16;
inline constexpr int kBosPathSum = 17;
inline constexpr int kAdd1 = 18;  // PathSum ops
inline constexpr int kAdd3 = 19;
inline constexpr int kMul2 = 20;
inline constexpr int kMul3 = 21;
inline constexpr int kSub2 = 22;
inline constexpr int kVocabSize = 23;

inline bool is_digit(int t) { return t >= 0 && t <= 9; }
inline bool is_pathsum_op(int t) { return t >= kAdd1 && t <= kSub2; }
std::string name(int t);
}  // namespace tok

enum class EnvId { ModChain, PathSum };
EnvId env_from_name(const std::string& name);  // throws ConfigError
const char* env_name(EnvId id);

inline constexpr int kModChainModulus = 10;
inline constexpr int kPathSumModulus = 17;

struct TaskInstance {
  TokenSeq prompt;
  int target = 0;
  EnvId env_id = EnvId::ModChain;
  std::uint64_t instance_seed = 0;

  // PathSum endpoints (redundant with the prompt, kept for convenience).
  int start_value = 0;
};

struct Verdict {
  int reward = 0;  // strictly binary
  std::vector<std::string> op_sequence;
  bool has_answer = false;
  int parsed_answer = 0;
};

// Deterministic task generation. ModChain difficulty = number of operators
// (range 1..6); PathSum difficulty = required count of distinct correct
// operation sequences (range 1..12) within kPathSumEnumMaxOps operations.
TaskInstance sample_task(EnvId env_id, int difficulty, std::uint64_t rng_seed);

inline constexpr int kPathSumEnumMaxOps = 6;

// Total; never throws on malformed completions.
Verdict verify(const TaskInstance& task, const TokenSeq& completion);

// Exhaustive set of reward-1 completions with length <= max_len tokens.
// Searches grammar-valid candidates only; throws ResourceError when the
// candidate count would exceed 10^6.
std::vector<TokenSeq> enumerate_solutions(const TaskInstance& task, int max_len);

// A constructed reward-1 completion (exists for every sampled task).
TokenSeq reference_solution(const TaskInstance& task);

// Applies a PathSum op token to a value (mod kPathSumModulus).
int apply_pathsum_op(int value, int op_token);

}  // namespace psnlab
