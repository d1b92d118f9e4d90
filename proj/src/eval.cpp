// Multiple-choice evaluation harness.
#include "dalm/eval.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "dalm/audio.hpp"
#include "dalm/errors.hpp"
#include "dalm/pipeline.hpp"

namespace dalm::eval {
namespace {

std::string lower(const std::string & s) {
    std::string out = s;
    for (char & c : out) c = char(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

// Longest common contiguous substring length.
size_t lcs_length(const std::string & a, const std::string & b) {
    if (a.empty() || b.empty()) return 0;
    std::vector<size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
    size_t              best = 0;
    for (size_t i = 1; i <= a.size(); ++i) {
        for (size_t j = 1; j <= b.size(); ++j) {
            cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : 0;
            best   = std::max(best, cur[j]);
        }
        std::swap(prev, cur);
    }
    return best;
}

} // namespace

void BenchmarkItem::validate() const {
    if (question.empty()) throw InvalidInputError("benchmark item: question must be non-empty");
    if (choices.size() < 2) throw InvalidInputError("benchmark item: need at least 2 choices");
    if (choices.size() > 26) throw InvalidInputError("benchmark item: more than 26 choices cannot be lettered");
    if (answer_index < 0 || answer_index >= int(choices.size()))
        throw InvalidInputError("benchmark item: answer_index " + std::to_string(answer_index) +
                                " outside the " + std::to_string(choices.size()) + " choices");
}

std::string format_mc_prompt(const std::string & question, const std::vector<std::string> & choices) {
    if (choices.size() < 2 || choices.size() > 26)
        throw InvalidInputError("mc prompt: need between 2 and 26 choices, got " +
                                std::to_string(choices.size()));
    std::string out = question;
    for (size_t i = 0; i < choices.size(); ++i) {
        out += "\n";
        out += char('A' + int(i));
        out += " . " + choices[i];
    }
    out += "\nanswer with one letter .";
    return out;
}

std::string format_mc_prompt(const BenchmarkItem & item) {
    item.validate();
    return format_mc_prompt(item.question, item.choices);
}

int extract_answer(const std::string & raw_output, const std::vector<std::string> & choices) {
    int n = int(choices.size());

    // A lone capital letter is an explicit answer; lowercase is left alone
    // because bare "a" is an article in ordinary caption text.
    for (const std::string & w : text::split_words(raw_output)) {
        if (w.size() == 1 && w[0] >= 'A' && w[0] < 'A' + n) return w[0] - 'A';
    }

    std::string haystack = lower(raw_output);
    size_t      best_len = 0;
    int         best     = kAbstain;
    for (int i = 0; i < n; ++i) {
        size_t len = lcs_length(haystack, lower(choices[size_t(i)]));
        if (len > best_len) {
            best_len = len;
            best     = i;
        }
    }
    return best;
}

void write_benchmark(const std::string & path, const std::vector<BenchmarkItem> & items) {
    namespace fs = std::filesystem;
    for (const BenchmarkItem & it : items) it.validate();
    fs::path target(path);
    if (target.has_parent_path()) fs::create_directories(target.parent_path());
    fs::path      tmp = target.string() + ".tmp";
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot open '" + tmp.string() + "' for writing");
    for (const BenchmarkItem & it : items) {
        nlohmann::json j;
        j["audio"]        = it.audio_path;
        j["question"]     = it.question;
        j["choices"]      = it.choices;
        j["answer_index"] = it.answer_index;
        j["category"]     = it.category;
        out << j.dump() << "\n";
    }
    out.close();
    if (!out) throw IoError("failed writing '" + tmp.string() + "'");
    fs::rename(tmp, target);
}

std::vector<BenchmarkItem> read_benchmark(const std::string & path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open benchmark file '" + path + "'");
    std::vector<BenchmarkItem> items;
    std::string                line;
    int64_t                    lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object())
            throw IntegrityError("benchmark file '" + path + "' line " + std::to_string(lineno) +
                                 " is not a JSON object");
        try {
            BenchmarkItem it;
            it.audio_path   = j.at("audio").get<std::string>();
            it.question     = j.at("question").get<std::string>();
            it.choices      = j.at("choices").get<std::vector<std::string>>();
            it.answer_index = j.at("answer_index").get<int>();
            it.category     = j.at("category").get<std::string>();
            it.validate();
            items.push_back(std::move(it));
        } catch (const nlohmann::json::exception & e) {
            throw IntegrityError("benchmark file '" + path + "' line " + std::to_string(lineno) +
                                 ": " + e.what());
        } catch (const InvalidInputError & e) {
            throw IntegrityError("benchmark file '" + path + "' line " + std::to_string(lineno) +
                                 ": " + e.what());
        }
    }
    return items;
}

EvalReport evaluate(const model::MaskPredictor & m, const text::Vocab & vocab,
                    const std::vector<BenchmarkItem> & items, const dec::DecodeSchedule & sched) {
    if (items.empty()) throw InvalidInputError("evaluate: no benchmark items");
    for (const BenchmarkItem & it : items) it.validate();

    EvalReport r;
    for (const BenchmarkItem & it : items) {
        ItemResult res;
        res.audio_path = it.audio_path;
        res.category   = it.category;
        res.correct    = it.answer_index;

        ad::TPtr prefix;
        bool     usable = true;
        if (!it.audio_path.empty()) {
            try {
                ad::Tape tape(false);
                prefix = pipe::prefix_from_waveform(tape, m, audio::read_wav(it.audio_path));
            } catch (const std::runtime_error & e) {
                usable = false;
                r.warnings.push_back("skipping audio '" + it.audio_path + "': " + e.what());
            }
        }
        if (usable) {
            std::vector<int32_t> prompt_ids = vocab.encode(format_mc_prompt(it));
            Rng                  rng(0); // argmax decode draws nothing
            dec::DecodeResult    out = dec::decode(m, prefix, prompt_ids, sched, rng);
            res.raw_output           = vocab.decode(out.tokens);
            res.predicted            = extract_answer(res.raw_output, it.choices);
        } else {
            res.skipped   = true;
            res.predicted = kAbstain;
        }
        r.items.push_back(std::move(res));
    }

    std::map<std::string, CategoryStat> by_cat;
    for (const ItemResult & res : r.items) {
        CategoryStat & c = by_cat[res.category];
        c.name           = res.category;
        ++c.total;
        ++r.total;
        if (res.skipped) ++r.skipped;
        if (res.predicted == kAbstain) {
            ++c.abstained;
            ++r.abstained;
        } else if (res.predicted == res.correct) {
            ++c.correct;
            ++r.correct;
        }
    }
    r.incorrect = r.total - r.correct - r.abstained;
    for (auto & [name, c] : by_cat) {
        c.accuracy = c.total > 0 ? double(c.correct) / double(c.total) : 0.0;
        r.categories.push_back(c);
    }
    r.overall_accuracy = r.total > 0 ? double(r.correct) / double(r.total) : 0.0;
    return r;
}

std::string report_table(const EvalReport & r) {
    std::ostringstream out;
    char               buf[128];
    std::snprintf(buf, sizeof(buf), "%-12s %7s %8s %8s %9s %9s\n", "category", "items", "correct",
                  "wrong", "abstain", "accuracy");
    out << buf;
    auto row = [&](const std::string & name, int64_t total, int64_t correct, int64_t abstained) {
        int64_t wrong = total - correct - abstained;
        double  acc   = total > 0 ? 100.0 * double(correct) / double(total) : 0.0;
        std::snprintf(buf, sizeof(buf), "%-12s %7lld %8lld %8lld %9lld %8.2f%%\n", name.c_str(),
                      (long long)total, (long long)correct, (long long)wrong, (long long)abstained,
                      acc);
        out << buf;
    };
    for (const CategoryStat & c : r.categories) row(c.name, c.total, c.correct, c.abstained);
    row("overall", r.total, r.correct, r.abstained);
    if (r.skipped > 0) out << r.skipped << " item(s) had unreadable audio and scored as abstain\n";
    return out.str();
}

std::string report_json(const EvalReport & r) {
    nlohmann::json j;
    j["total"]            = r.total;
    j["correct"]          = r.correct;
    j["incorrect"]        = r.incorrect;
    j["abstained"]        = r.abstained;
    j["skipped"]          = r.skipped;
    j["overall_accuracy"] = r.overall_accuracy;
    j["categories"]       = nlohmann::json::array();
    for (const CategoryStat & c : r.categories) {
        j["categories"].push_back({{"name", c.name},
                                   {"total", c.total},
                                   {"correct", c.correct},
                                   {"abstained", c.abstained},
                                   {"accuracy", c.accuracy}});
    }
    j["items"] = nlohmann::json::array();
    for (const ItemResult & it : r.items) {
        j["items"].push_back({{"audio", it.audio_path},
                              {"category", it.category},
                              {"predicted", it.predicted},
                              {"correct", it.correct},
                              {"raw_output", it.raw_output},
                              {"skipped", it.skipped}});
    }
    j["warnings"] = r.warnings;
    return j.dump(2);
}

} // namespace dalm::eval
