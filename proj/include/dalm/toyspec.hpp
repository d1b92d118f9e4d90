#pragma once
// The toy spoken-attribute domain: attribute grids, the spoken-word lexicon,
// question templates, and the vocabulary assembled from all of them.
//
// Every attribute takes one of four values drawn uniformly, so the correct
// option index of a four-choice question over the canonical grid order is
// itself uniform. Signal design (see audio synthesis) guarantees each value
// is recoverable from the waveform.

#include <array>
#include <string>
#include <vector>

#include "dalm/text.hpp"

namespace dalm::toy {

inline constexpr int kValuesPerAttribute = 4;

extern const std::array<const char *, 4> kGenders;   // voice category
extern const std::array<const char *, 4> kAges;
extern const std::array<const char *, 4> kAccents;
extern const std::array<const char *, 4> kEmotions;
extern const std::array<const char *, 4> kIntents;
extern const std::array<double, 4>       kPitchesHz;
extern const std::array<const char *, 4> kPitchWords; // "110".."330"
extern const std::array<double, 4>       kVolumes;    // waveform amplitude
extern const std::array<const char *, 4> kVolumeWords;
extern const std::array<double, 4>       kSpeedsTps;  // spoken tokens per second
extern const std::array<const char *, 4> kSpeedWords;
extern const std::array<const char *, 4> kWordCountWords; // "3".."6"

// Spoken-text lexicon; the first word of every utterance is drawn from the
// first four entries so "which word is spoken first" has a fixed choice set.
extern const std::array<const char *, 12> kLexicon;
inline constexpr int kMinSpokenWords = 3;
inline constexpr int kMaxSpokenWords = 6;

// Question catalogue. Categories mirror a perception/reasoning split.
enum class Question : int {
    gender = 0,
    pitch,
    volume,
    emotion,
    accent,
    age,        // perception block ends here
    speed,
    intent,
    word_count,
    first_word,
};
inline constexpr int kQuestionCount = 10;

const char * question_text(Question q);
const char * question_category(Question q); // "perception" or "reasoning"
const char * question_name(Question q);     // short identifier for tags and reports
// The canonical four choices for a question, in grid order.
std::array<std::string, 4> question_choices(Question q);

const char * caption_question();   // the stage-2 caption prompt
const char * transcribe_prompt();  // the stage-1 prompt

// Grid lookups; -1 when the value is absent.
int grid_index(const std::array<const char *, 4> & grid, const std::string & value);
int nearest_index(const std::array<double, 4> & grid, double value);
int lexicon_index(const std::string & word);

// Every string the tokenizer may encounter (prompts, choices, captions,
// lexicon, punctuation); feeding it to build_vocab yields the toy vocab.
std::vector<std::string> vocab_corpus();
const text::Vocab &      vocab(); // built once, cached

} // namespace dalm::toy
