// Desk-scale corpus builder.
#include "dalm/toycorpus.hpp"

#include <cstdio>
#include <filesystem>
#include <string>

#include "dalm/audio.hpp"
#include "dalm/errors.hpp"
#include "dalm/toyaudio.hpp"

namespace dalm::toy {
namespace {

namespace fs = std::filesystem;

std::string letter_word(int index) { return std::string(1, char('A' + index)); }

} // namespace

void CorpusSpec::validate() const {
    if (n_stage1 < 0 || n_caption < 0 || n_qa < 0 || n_benchmark < 0)
        throw ConfigError("corpus: record counts must be >= 0");
    if (n_stage1 + n_caption + n_qa + n_benchmark == 0)
        throw ConfigError("corpus: nothing to generate, all record counts are zero");
    if (!(val_fraction >= 0.0) || val_fraction >= 1.0)
        throw ConfigError("corpus: val_fraction must be in [0, 1)");
    if (!(rewrite_fraction >= 0.0) || rewrite_fraction > 1.0)
        throw ConfigError("corpus: rewrite_fraction must be in [0, 1]");
    if (out_dir.empty()) throw ConfigError("corpus: out_dir must be set");
}

forge::AudioMetadata sample_metadata(Rng & rng) {
    forge::AudioMetadata m;
    m.gender         = kGenders[rng.below(4)];
    m.age            = kAges[rng.below(4)];
    m.accent         = kAccents[rng.below(4)];
    m.emotion        = kEmotions[rng.below(4)];
    m.intent         = kIntents[rng.below(4)];
    m.pitch_hz       = kPitchesHz[rng.below(4)];
    m.volume         = kVolumes[rng.below(4)];
    m.speaking_speed = kSpeedsTps[rng.below(4)];

    int         count = kMinSpokenWords + int(rng.below(kMaxSpokenWords - kMinSpokenWords + 1));
    std::string te    = kLexicon[rng.below(4)]; // first word from the fixed choice set
    for (int i = 1; i < count; ++i) te += std::string(" ") + kLexicon[rng.below(kLexicon.size())];
    m.spoken_text = te;
    m.duration_s  = double(count) / m.speaking_speed;
    return m;
}

int answer_index_for(Question q, const forge::AudioMetadata & meta) {
    int idx = -1;
    switch (q) {
        case Question::gender: idx = grid_index(kGenders, meta.gender); break;
        case Question::pitch: idx = nearest_index(kPitchesHz, meta.pitch_hz); break;
        case Question::volume: idx = nearest_index(kVolumes, meta.volume); break;
        case Question::emotion: idx = grid_index(kEmotions, meta.emotion); break;
        case Question::accent: idx = grid_index(kAccents, meta.accent); break;
        case Question::age: idx = grid_index(kAges, meta.age); break;
        case Question::speed: idx = nearest_index(kSpeedsTps, meta.speaking_speed); break;
        case Question::intent: idx = grid_index(kIntents, meta.intent); break;
        case Question::word_count: {
            int count = int(text::split_words(meta.spoken_text).size());
            idx       = count - kMinSpokenWords;
            if (idx < 0 || idx >= kValuesPerAttribute) idx = -1;
            break;
        }
        case Question::first_word: {
            auto words = text::split_words(meta.spoken_text);
            if (!words.empty()) {
                int lex = lexicon_index(words.front());
                idx     = lex >= 0 && lex < kValuesPerAttribute ? lex : -1;
            }
            break;
        }
    }
    if (idx < 0) throw InvalidInputError(std::string("metadata has no grid answer for the ") +
                                         question_name(q) + " question");
    return idx;
}

CorpusFiles build_toy_corpus(const CorpusSpec & spec) {
    spec.validate();
    Rng rng(spec.seed);

    fs::path root(spec.out_dir);
    fs::path wav_dir = root / "wav";
    fs::create_directories(wav_dir);

    int64_t serial    = 0;
    auto    next_wav  = [&](const forge::AudioMetadata & meta) {
        char name[32];
        std::snprintf(name, sizeof(name), "%06lld.wav", (long long)serial++);
        std::string path = (wav_dir / name).string();
        Rng         synth_rng = rng.fork("synth" + std::string(name));
        audio::write_wav(path, synth_toy_audio(meta, synth_rng));
        return path;
    };

    // Stage 1: transcription records.
    std::vector<forge::DatasetRecord> stage1;
    for (int64_t i = 0; i < spec.n_stage1; ++i) {
        forge::AudioMetadata meta = sample_metadata(rng);
        forge::DatasetRecord rec;
        rec.audio    = next_wav(meta);
        rec.metadata = meta;
        rec.question = transcribe_prompt();
        rec.answer   = meta.spoken_text;
        rec.tags     = {"toy-asr", "transcription"};
        stage1.push_back(std::move(rec));
    }

    // Stage 2: captions (offline engine, optional paraphrase rewrite) + QA.
    std::vector<forge::DatasetRecord> stage2;
    forge::OfflineCaptionEngine       captioner(rng.fork("captions").below(1ull << 62));
    forge::OfflineParaphraseEngine    paraphraser;
    for (int64_t i = 0; i < spec.n_caption; ++i) {
        forge::AudioMetadata meta = sample_metadata(rng);
        forge::CaptionRecord cap;
        cap.audio_path       = next_wav(meta);
        cap.metadata         = meta;
        cap.rendered_context = forge::render_context(meta);
        cap.question         = caption_question();
        cap.caption          = forge::generate_caption(captioner, cap.rendered_context, cap.question);
        cap.source_tag       = captioner.source_tag();
        if (rng.u01() < spec.rewrite_fraction) {
            cap.rewritten_caption = forge::rewrite_caption(paraphraser, cap.caption);
            cap.source_tag        = "rewrite";
        }
        stage2.push_back(forge::to_dataset_record(cap));
    }
    for (int64_t i = 0; i < spec.n_qa; ++i) {
        forge::AudioMetadata meta = sample_metadata(rng);
        Question             q    = Question(rng.below(kQuestionCount));
        auto                 choices = question_choices(q);
        forge::DatasetRecord rec;
        rec.audio    = next_wav(meta);
        rec.metadata = meta;
        rec.question = eval::format_mc_prompt(question_text(q),
                                              {choices.begin(), choices.end()});
        rec.answer   = letter_word(answer_index_for(q, meta));
        rec.tags     = {"toy-qa", "qa", question_name(q), question_category(q)};
        stage2.push_back(std::move(rec));
    }

    // Held-out benchmark items, never seen in training.
    std::vector<eval::BenchmarkItem> bench;
    for (int64_t i = 0; i < spec.n_benchmark; ++i) {
        forge::AudioMetadata meta = sample_metadata(rng);
        Question             q    = Question(rng.below(kQuestionCount));
        auto                 choices = question_choices(q);
        eval::BenchmarkItem  item;
        item.audio_path   = next_wav(meta);
        item.question     = question_text(q);
        item.choices      = {choices.begin(), choices.end()};
        item.answer_index = answer_index_for(q, meta);
        item.category     = question_category(q);
        bench.push_back(std::move(item));
    }

    CorpusFiles files;
    files.wav_dir     = wav_dir.string();
    files.n_benchmark = int64_t(bench.size());
    if (!stage1.empty()) {
        forge::SplitSpec split{spec.val_fraction, rng.fork("split1").below(1ull << 62)};
        files.stage1_summary = forge::build_dataset(stage1, (root / "stage1").string(), split);
        files.stage1_train   = (root / "stage1" / "train.jsonl").string();
        files.stage1_val     = (root / "stage1" / "val.jsonl").string();
    }
    if (!stage2.empty()) {
        forge::SplitSpec split{spec.val_fraction, rng.fork("split2").below(1ull << 62)};
        files.stage2_summary = forge::build_dataset(stage2, (root / "stage2").string(), split);
        files.stage2_train   = (root / "stage2" / "train.jsonl").string();
        files.stage2_val     = (root / "stage2" / "val.jsonl").string();
    }
    if (!bench.empty()) {
        files.benchmark = (root / "benchmark.jsonl").string();
        eval::write_benchmark(files.benchmark, bench);
    }
    return files;
}

} // namespace dalm::toy
