#pragma once
// Multiple-choice evaluation: lettered prompt formatting, answer extraction
// with an explicit abstain outcome, and per-category accuracy reports.

#include <cstdint>
#include <string>
#include <vector>

#include "dalm/decoder.hpp"
#include "dalm/model.hpp"
#include "dalm/text.hpp"

namespace dalm::eval {

struct BenchmarkItem {
    std::string              audio_path; // empty = text-only item
    std::string              question;
    std::vector<std::string> choices; // 2..26 entries
    int                      answer_index = 0;
    std::string              category;

    void validate() const; // throws InvalidInputError
};

// Question, one "X . <choice>" line per choice, then a one-letter instruction.
std::string format_mc_prompt(const std::string & question, const std::vector<std::string> & choices);
std::string format_mc_prompt(const BenchmarkItem & item);

inline constexpr int kAbstain = -1;

// First standalone capital letter wins; fallback is the longest common
// substring against the choice texts; nothing in common means abstain.
int extract_answer(const std::string & raw_output, const std::vector<std::string> & choices);

// The benchmark file format: one JSON object per line.
void                       write_benchmark(const std::string & path, const std::vector<BenchmarkItem> & items);
std::vector<BenchmarkItem> read_benchmark(const std::string & path);

struct ItemResult {
    std::string audio_path;
    std::string category;
    int         predicted = kAbstain; // kAbstain or a choice index
    int         correct   = 0;        // the item's answer_index
    std::string raw_output;
    bool        skipped = false; // audio unreadable; scored as abstain
};

struct CategoryStat {
    std::string name;
    int64_t     total = 0, correct = 0, abstained = 0;
    double      accuracy = 0.0;
};

struct EvalReport {
    int64_t total = 0, correct = 0, incorrect = 0, abstained = 0, skipped = 0;
    double  overall_accuracy = 0.0;
    std::vector<CategoryStat> categories; // sorted by name
    std::vector<ItemResult>   items;
    std::vector<std::string>  warnings; // one line per skipped item
};

// Decodes every item with the given schedule (argmax, hence deterministic).
// Unreadable audio scores as abstain and is recorded in warnings; no item
// ever leaves the denominator.
EvalReport evaluate(const model::MaskPredictor & m, const text::Vocab & vocab,
                    const std::vector<BenchmarkItem> & items, const dec::DecodeSchedule & sched);

std::string report_table(const EvalReport & r);
std::string report_json(const EvalReport & r);

} // namespace dalm::eval
