#include "psnlab/env.hpp"

#include <algorithm>
#include <cstdint>
#include <functional>

#include "psnlab/errors.hpp"
#include "psnlab/rng.hpp"

namespace psnlab {

namespace tok {

std::string name(int t) {
  if (is_digit(t)) return std::string(1, static_cast<char>('0' + t));
  switch (t) {
    case kPlus: return "+";
    case kMul: return "*";
    case kArrow: return "->";
    case kAns: return "ANS";
    case kEos: return "EOS";
    case kSep: return "|";
    case kBosModChain: return "MODCHAIN";
    case kBosPathSum: return "PATHSUM";
    case kAdd1: return "+1";
    case kAdd3: return "+3";
    case kMul2: return "x2";
    case kMul3: return "x3";
    case kSub2: return "-2";
    default: return "?";
  }
}

}  // namespace tok

EnvId env_from_name(const std::string& name) {
  if (name == "ModChain") return EnvId::ModChain;
  if (name == "PathSum") return EnvId::PathSum;
  throw ConfigError("unknown env_id: " + name);
}

const char* env_name(EnvId id) {
  return id == EnvId::ModChain ? "ModChain" : "PathSum";
}

int apply_pathsum_op(int value, int op_token) {
  const int m = kPathSumModulus;
  switch (op_token) {
    case tok::kAdd1: return (value + 1) % m;
    case tok::kAdd3: return (value + 3) % m;
    case tok::kMul2: return (value * 2) % m;
    case tok::kMul3: return (value * 3) % m;
    case tok::kSub2: return ((value - 2) % m + m) % m;
    default: throw InputError("not a PathSum op token");
  }
}

namespace {

constexpr int kPathSumOps[5] = {tok::kAdd1, tok::kAdd3, tok::kMul2, tok::kMul3, tok::kSub2};
constexpr std::size_t kEnumBound = 1000000;

void append_number(TokenSeq& seq, int value) {
  if (value >= 10) seq.push_back(value / 10);
  seq.push_back(value % 10);
}

// Counts distinct correct op sequences for (start, target) with 1..max_ops ops.
int count_pathsum_solutions(int start, int target, int max_ops, int stop_at) {
  int count = 0;
  std::vector<int> ops;
  std::function<void(int)> rec = [&](int value) {
    if (count >= stop_at) return;
    if (!ops.empty() && value == target) ++count;
    if (static_cast<int>(ops.size()) == max_ops) return;
    for (int op : kPathSumOps) {
      ops.push_back(op);
      rec(apply_pathsum_op(value, op));
      ops.pop_back();
      if (count >= stop_at) return;
    }
  };
  rec(start);
  return count;
}

TaskInstance sample_modchain(int difficulty, std::uint64_t seed) {
  rng::Stream stream(rng::derive(seed, 0xE01u));
  TaskInstance task;
  task.env_id = EnvId::ModChain;
  task.instance_seed = seed;
  task.prompt.push_back(tok::kBosModChain);
  int acc = static_cast<int>(stream.below(10));
  task.prompt.push_back(acc);
  for (int i = 0; i < difficulty; ++i) {
    const int op = stream.below(2) == 0 ? tok::kPlus : tok::kMul;
    const int v = static_cast<int>(stream.below(10));
    task.prompt.push_back(op);
    task.prompt.push_back(v);
    acc = op == tok::kPlus ? (acc + v) % kModChainModulus : (acc * v) % kModChainModulus;
  }
  task.prompt.push_back(tok::kSep);
  task.target = acc;
  return task;
}

TaskInstance sample_pathsum(int difficulty, std::uint64_t seed) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    rng::Stream stream(rng::derive(seed, 0xE02u, attempt));
    const int start = static_cast<int>(stream.below(kPathSumModulus));
    const int n_ops = 2 + static_cast<int>(stream.below(3));
    int value = start;
    for (int i = 0; i < n_ops; ++i) {
      value = apply_pathsum_op(value, kPathSumOps[stream.below(5)]);
    }
    const int target = value;
    if (count_pathsum_solutions(start, target, kPathSumEnumMaxOps, difficulty) < difficulty) {
      continue;
    }
    TaskInstance task;
    task.env_id = EnvId::PathSum;
    task.instance_seed = seed;
    task.start_value = start;
    task.target = target;
    task.prompt.push_back(tok::kBosPathSum);
    append_number(task.prompt, start);
    task.prompt.push_back(tok::kSep);
    append_number(task.prompt, target);
    task.prompt.push_back(tok::kSep);
    return task;
  }
}

// Parses a well-formed ModChain prompt back into (values, ops).
void parse_modchain_prompt(const TokenSeq& prompt, std::vector<int>& values,
                           std::vector<int>& ops) {
  values.clear();
  ops.clear();
  std::size_t i = 1;  // skip BOS
  values.push_back(prompt[i++]);
  while (i + 1 < prompt.size() && prompt[i] != tok::kSep) {
    ops.push_back(prompt[i++]);
    values.push_back(prompt[i++]);
  }
}

Verdict verify_modchain(const TaskInstance& task, const TokenSeq& c) {
  Verdict v;
  std::size_t i = 0;
  std::vector<std::string> ops;
  int steps = 0;
  while (i + 4 < c.size() && tok::is_digit(c[i]) && (c[i + 1] == tok::kPlus || c[i + 1] == tok::kMul) &&
         tok::is_digit(c[i + 2]) && c[i + 3] == tok::kArrow && tok::is_digit(c[i + 4])) {
    ops.push_back(tok::name(c[i + 1]));
    i += 5;
    ++steps;
  }
  if (steps < 1) return v;
  if (i + 3 != c.size() || c[i] != tok::kAns || !tok::is_digit(c[i + 1]) || c[i + 2] != tok::kEos) {
    return v;
  }
  v.op_sequence = std::move(ops);
  v.has_answer = true;
  v.parsed_answer = c[i + 1];
  v.reward = (v.parsed_answer == task.target) ? 1 : 0;
  return v;
}

Verdict verify_pathsum(const TaskInstance& task, const TokenSeq& c) {
  Verdict v;
  std::size_t i = 0;
  std::vector<std::string> ops;
  int value = task.start_value;
  while (i < c.size() && tok::is_pathsum_op(c[i])) {
    ops.push_back(tok::name(c[i]));
    value = apply_pathsum_op(value, c[i]);
    ++i;
  }
  if (ops.empty()) return v;
  if (i + 2 != c.size() || c[i] != tok::kAns || c[i + 1] != tok::kEos) return v;
  v.op_sequence = std::move(ops);
  v.has_answer = true;
  v.parsed_answer = value;
  v.reward = (value == task.target) ? 1 : 0;
  return v;
}

}  // namespace

TaskInstance sample_task(EnvId env_id, int difficulty, std::uint64_t rng_seed) {
  switch (env_id) {
    case EnvId::ModChain:
      if (difficulty < 1 || difficulty > 6) throw ConfigError("ModChain difficulty must be in 1..6");
      return sample_modchain(difficulty, rng_seed);
    case EnvId::PathSum:
      if (difficulty < 1 || difficulty > 12) throw ConfigError("PathSum difficulty must be in 1..12");
      return sample_pathsum(difficulty, rng_seed);
  }
  throw ConfigError("unknown env_id");
}

Verdict verify(const TaskInstance& task, const TokenSeq& completion) {
  for (int t : completion) {
    if (t < 0 || t >= tok::kVocabSize) return {};
  }
  return task.env_id == EnvId::ModChain ? verify_modchain(task, completion)
                                        : verify_pathsum(task, completion);
}

TokenSeq reference_solution(const TaskInstance& task) {
  TokenSeq out;
  if (task.env_id == EnvId::ModChain) {
    std::vector<int> values, ops;
    parse_modchain_prompt(task.prompt, values, ops);
    int acc = values[0];
    for (std::size_t i = 0; i < ops.size(); ++i) {
      const int next = ops[i] == tok::kPlus ? (acc + values[i + 1]) % kModChainModulus
                                            : (acc * values[i + 1]) % kModChainModulus;
      out.push_back(acc);
      out.push_back(ops[i]);
      out.push_back(values[i + 1]);
      out.push_back(tok::kArrow);
      out.push_back(next);
      acc = next;
    }
    out.push_back(tok::kAns);
    out.push_back(acc);
    out.push_back(tok::kEos);
    return out;
  }
  // PathSum: breadth-first search for a shortest correct op sequence.
  for (int len = 1; len <= kPathSumEnumMaxOps; ++len) {
    std::vector<int> ops;
    TokenSeq found;
    std::function<bool(int, int)> rec = [&](int value, int remaining) -> bool {
      if (remaining == 0) {
        if (value != task.target) return false;
        found.assign(ops.begin(), ops.end());
        found.push_back(tok::kAns);
        found.push_back(tok::kEos);
        return true;
      }
      for (int op : kPathSumOps) {
        ops.push_back(op);
        if (rec(apply_pathsum_op(value, op), remaining - 1)) return true;
        ops.pop_back();
      }
      return false;
    };
    if (rec(task.start_value, len)) return found;
  }
  throw ResourceError("no PathSum reference solution within the op bound");
}

std::vector<TokenSeq> enumerate_solutions(const TaskInstance& task, int max_len) {
  std::vector<TokenSeq> solutions;
  if (task.env_id == EnvId::PathSum) {
    const int max_ops = max_len - 2;  // trailing ANS EOS
    std::size_t candidates = 0, pw = 1;
    for (int l = 1; l <= max_ops; ++l) {
      pw *= 5;
      candidates += pw;
      if (candidates > kEnumBound) throw ResourceError("enumeration bound exceeded");
    }
    std::vector<int> ops;
    std::function<void(int)> rec = [&](int value) {
      if (!ops.empty() && value == task.target) {
        TokenSeq c(ops.begin(), ops.end());
        c.push_back(tok::kAns);
        c.push_back(tok::kEos);
        solutions.push_back(std::move(c));
      }
      if (static_cast<int>(ops.size()) == max_ops) return;
      for (int op : kPathSumOps) {
        ops.push_back(op);
        rec(apply_pathsum_op(value, op));
        ops.pop_back();
      }
    };
    if (max_ops >= 1) rec(task.start_value);
    return solutions;
  }

  // ModChain: grammar-valid candidates are k step tokens (a op b -> c) followed
  // by ANS d EOS; 2000^k * 10 candidates for k steps.
  std::size_t candidates = 0, per_step = 1;
  const int max_steps = (max_len - 3) / 5;
  for (int k = 1; k <= max_steps; ++k) {
    per_step *= 2000;
    candidates += per_step * 10;
    if (candidates > kEnumBound) throw ResourceError("enumeration bound exceeded");
  }
  TokenSeq cur;
  std::function<void(int)> steps = [&](int remaining) {
    if (!cur.empty()) {
      for (int d = 0; d <= 9; ++d) {
        TokenSeq c = cur;
        c.push_back(tok::kAns);
        c.push_back(d);
        c.push_back(tok::kEos);
        if (verify(task, c).reward == 1) solutions.push_back(std::move(c));
      }
    }
    if (remaining == 0) return;
    for (int a = 0; a <= 9; ++a) {
      for (int op : {tok::kPlus, tok::kMul}) {
        for (int b = 0; b <= 9; ++b) {
          for (int r = 0; r <= 9; ++r) {
            cur.push_back(a);
            cur.push_back(op);
            cur.push_back(b);
            cur.push_back(tok::kArrow);
            cur.push_back(r);
            steps(remaining - 1);
            cur.resize(cur.size() - 5);
          }
        }
      }
    }
  };
  if (max_steps >= 1) steps(max_steps);
  return solutions;
}

}  // namespace psnlab
