#include "dalm/toyspec.hpp"

#include <cmath>

#include "dalm/errors.hpp"

namespace dalm::toy {

const std::array<const char *, 4> kGenders  = {"man", "woman", "boy", "girl"};
const std::array<const char *, 4> kAges     = {"child", "teen", "adult", "senior"};
const std::array<const char *, 4> kAccents  = {"american", "british", "indian", "australian"};
const std::array<const char *, 4> kEmotions = {"neutral", "happy", "sad", "angry"};
const std::array<const char *, 4> kIntents  = {"question", "command", "statement", "exclamation"};

const std::array<double, 4>       kPitchesHz  = {110.0, 165.0, 220.0, 330.0};
const std::array<const char *, 4> kPitchWords = {"110", "165", "220", "330"};

const std::array<double, 4>       kVolumes     = {0.15, 0.35, 0.60, 0.85};
const std::array<const char *, 4> kVolumeWords = {"quiet", "soft", "loud", "booming"};

const std::array<double, 4>       kSpeedsTps  = {2.0, 3.0, 4.0, 5.0};
const std::array<const char *, 4> kSpeedWords = {"slow", "steady", "brisk", "rapid"};

const std::array<const char *, 4> kWordCountWords = {"3", "4", "5", "6"};

const std::array<const char *, 12> kLexicon = {
    "take", "winding", "path",   "lake",   "river", "stone",
    "light", "morning", "shadow", "window", "garden", "silver",
};

const char * question_text(Question q) {
    switch (q) {
        case Question::gender: return "who is speaking ?";
        case Question::pitch: return "what is the fundamental pitch in hz ?";
        case Question::volume: return "how loud is the speaker ?";
        case Question::emotion: return "which emotion does the speaker convey ?";
        case Question::accent: return "which accent does the speaker have ?";
        case Question::age: return "what is the age group of the speaker ?";
        case Question::speed: return "how fast is the speech ?";
        case Question::intent: return "what is the intent of the utterance ?";
        case Question::word_count: return "how many words are spoken ?";
        case Question::first_word: return "which word is spoken first ?";
    }
    throw ContractError("question_text: bad question");
}

const char * question_category(Question q) {
    return int(q) <= int(Question::age) ? "perception" : "reasoning";
}

const char * question_name(Question q) {
    switch (q) {
        case Question::gender: return "gender";
        case Question::pitch: return "pitch";
        case Question::volume: return "volume";
        case Question::emotion: return "emotion";
        case Question::accent: return "accent";
        case Question::age: return "age";
        case Question::speed: return "speed";
        case Question::intent: return "intent";
        case Question::word_count: return "word_count";
        case Question::first_word: return "first_word";
    }
    throw ContractError("question_name: bad question");
}

std::array<std::string, 4> question_choices(Question q) {
    auto of = [](const std::array<const char *, 4> & a) {
        return std::array<std::string, 4>{a[0], a[1], a[2], a[3]};
    };
    switch (q) {
        case Question::gender: return of(kGenders);
        case Question::pitch: return of(kPitchWords);
        case Question::volume: return of(kVolumeWords);
        case Question::emotion: return of(kEmotions);
        case Question::accent: return of(kAccents);
        case Question::age: return of(kAges);
        case Question::speed: return of(kSpeedWords);
        case Question::intent: return of(kIntents);
        case Question::word_count: return of(kWordCountWords);
        case Question::first_word:
            return {kLexicon[0], kLexicon[1], kLexicon[2], kLexicon[3]};
    }
    throw ContractError("question_choices: bad question");
}

const char * caption_question() { return "what can you hear from the audio ?"; }
const char * transcribe_prompt() { return "transcribe the audio ."; }

int grid_index(const std::array<const char *, 4> & grid, const std::string & value) {
    for (int i = 0; i < 4; ++i)
        if (value == grid[size_t(i)]) return i;
    return -1;
}

int nearest_index(const std::array<double, 4> & grid, double value) {
    int best = 0;
    for (int i = 1; i < 4; ++i)
        if (std::abs(value - grid[size_t(i)]) < std::abs(value - grid[size_t(best)])) best = i;
    return best;
}

int lexicon_index(const std::string & word) {
    for (int i = 0; i < int(kLexicon.size()); ++i)
        if (word == kLexicon[size_t(i)]) return i;
    return -1;
}

std::vector<std::string> vocab_corpus() {
    std::vector<std::string> lines;

    lines.push_back(caption_question());
    lines.push_back(transcribe_prompt());
    lines.push_back("A B C D answer with one letter .");
    lines.push_back("0 1 2 3 4 5 6 7 8 9");
    lines.push_back("( ) : , . ? ! \" -");

    for (int q = 0; q < kQuestionCount; ++q) {
        lines.push_back(question_text(Question(q)));
        for (const std::string & c : question_choices(Question(q))) lines.push_back(c);
    }
    for (const char * w : kLexicon) lines.push_back(w);

    // Caption clause wording (values enter via the choice lines above).
    lines.push_back("a is speaking with an accent");
    lines.push_back("the voice belongs to a");
    lines.push_back("in an accent the tone sounds");
    lines.push_back("carrying a mood");
    lines.push_back("the pitch sits near hz");
    lines.push_back("pitched around hz");
    lines.push_back("at a volume the delivery is");
    lines.push_back("the pace is spoken at a pace");
    lines.push_back("lasting about seconds over roughly seconds");
    lines.push_back("the utterance reads as framed as");
    lines.push_back("the words say saying");
    lines.push_back("i can hear that and");
    return lines;
}

const text::Vocab & vocab() {
    static const text::Vocab v = text::build_vocab(vocab_corpus());
    return v;
}

} // namespace dalm::toy
