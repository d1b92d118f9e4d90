#pragma once
// Word-level tokenizer and token sequences with per-position segment roles.
// The vocabulary is assembled deterministically from a text corpus: three
// special tokens first, then every distinct word in sorted order.

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

namespace dalm::text {

enum class Role : uint8_t { audio_prefix = 0, prompt = 1, response = 2, pad = 3 };

const char * role_name(Role r);

struct TokenSequence {
    std::vector<int32_t> ids;
    std::vector<Role>    roles;

    size_t size() const { return ids.size(); }
    bool   empty() const { return ids.empty(); }

    void append(int32_t id, Role r) {
        ids.push_back(id);
        roles.push_back(r);
    }
    void append(const std::vector<int32_t> & more, Role r) {
        for (int32_t id : more) append(id, r);
    }

    int64_t count_role(Role r) const;
    // First index with the given role, or -1 when absent.
    int64_t first_role_index(Role r) const;
};

// Splits into alphanumeric runs; every other non-space character is its own
// single-character token ("what?" -> "what", "?").
std::vector<std::string> split_words(const std::string & s);

struct Vocab {
    std::vector<std::string>                 words;
    std::unordered_map<std::string, int32_t> index;
    int32_t                                  mask_id = -1;
    int32_t                                  end_id  = -1;
    int32_t                                  unk_id  = -1;

    int32_t size() const { return int32_t(words.size()); }

    // Unknown words map to unk_id; never throws.
    int32_t              id_of(const std::string & w) const;
    const std::string &  word_of(int32_t id) const;
    std::vector<int32_t> encode(const std::string & s) const;
    // Space-joined words; stop_at_end drops the first end token and the rest.
    std::string decode(const std::vector<int32_t> & ids, bool stop_at_end = false) const;
};

Vocab build_vocab(const std::vector<std::string> & corpus_lines);

} // namespace dalm::text
