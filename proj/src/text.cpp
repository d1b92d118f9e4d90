#include "dalm/text.hpp"

#include <algorithm>
#include <cctype>
#include <set>

#include "dalm/errors.hpp"

namespace dalm::text {

const char * role_name(Role r) {
    switch (r) {
        case Role::audio_prefix: return "audio_prefix";
        case Role::prompt: return "prompt";
        case Role::response: return "response";
        case Role::pad: return "pad";
    }
    return "?";
}

int64_t TokenSequence::count_role(Role r) const {
    int64_t n = 0;
    for (Role x : roles) n += (x == r);
    return n;
}

int64_t TokenSequence::first_role_index(Role r) const {
    for (size_t i = 0; i < roles.size(); ++i)
        if (roles[i] == r) return int64_t(i);
    return -1;
}

std::vector<std::string> split_words(const std::string & s) {
    std::vector<std::string> out;
    std::string              cur;
    for (unsigned char c : s) {
        if (std::isalnum(c)) {
            cur.push_back(char(c));
        } else {
            if (!cur.empty()) {
                out.push_back(cur);
                cur.clear();
            }
            if (!std::isspace(c)) out.push_back(std::string(1, char(c)));
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

int32_t Vocab::id_of(const std::string & w) const {
    auto it = index.find(w);
    return it == index.end() ? unk_id : it->second;
}

const std::string & Vocab::word_of(int32_t id) const {
    if (id < 0 || id >= size())
        throw InvalidInputError("token id " + std::to_string(id) + " out of range");
    return words[size_t(id)];
}

std::vector<int32_t> Vocab::encode(const std::string & s) const {
    std::vector<int32_t> ids;
    for (const std::string & w : split_words(s)) ids.push_back(id_of(w));
    return ids;
}

std::string Vocab::decode(const std::vector<int32_t> & ids, bool stop_at_end) const {
    std::string out;
    for (int32_t id : ids) {
        if (stop_at_end && id == end_id) break;
        if (!out.empty()) out.push_back(' ');
        out += word_of(id);
    }
    return out;
}

Vocab build_vocab(const std::vector<std::string> & corpus_lines) {
    std::set<std::string> distinct;
    for (const std::string & line : corpus_lines)
        for (const std::string & w : split_words(line)) distinct.insert(w);

    Vocab v;
    v.words = {"<mask>", "<end>", "<unk>"};
    v.mask_id = 0;
    v.end_id  = 1;
    v.unk_id  = 2;
    for (const std::string & w : distinct) v.words.push_back(w);
    for (size_t i = 0; i < v.words.size(); ++i) v.index[v.words[i]] = int32_t(i);
    return v;
}

} // namespace dalm::text
