#pragma once
// Caption-instruction data construction: metadata rendering, caption
// generation and rewriting through pluggable text clients, and the
// line-delimited dataset files with split and summary support.

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "dalm/rng.hpp"

namespace dalm::forge {

// The ten audio attributes. Strings default to "unknown"; numeric fields
// use values <= 0 to mean unknown.
struct AudioMetadata {
    std::string gender  = "unknown";
    std::string age     = "unknown";
    std::string accent  = "unknown";
    std::string emotion = "unknown";
    double      pitch_hz       = 0.0;
    double      volume         = 0.0; // relative amplitude
    double      speaking_speed = 0.0; // spoken tokens per second
    double      duration_s     = 0.0;
    std::string intent      = "unknown";
    std::string spoken_text = "";
};

// Timestamped transcript line plus a parenthetical listing all ten
// attributes in canonical order.
std::string render_context(const AudioMetadata & meta);

// Parses a rendered context back into metadata; inverse of render_context
// for the fields it carries. Unparseable input keeps the defaults.
AudioMetadata parse_context(const std::string & context);

// Text-in/text-out completion source. Implementations may throw IoError on
// transient failure; callers retry per RetryPolicy.
struct CaptionClient {
    virtual ~CaptionClient() = default;
    virtual std::string complete(const std::string & prompt) = 0;
    virtual const char * source_tag() const = 0; // "template" or "external-LLM"
};

// Echoes the prompt. Useful as a rewrite pass-through and in tests.
struct IdentityClient : CaptionClient {
    std::string  complete(const std::string & prompt) override { return prompt; }
    const char * source_tag() const override { return "external-LLM"; }
};

// Deterministic caption composer: parses the rendered context out of the
// prompt and fills seeded phrase-bank templates. Pure function of
// (prompt, seed). Output stays within the toy vocabulary.
struct OfflineCaptionEngine : CaptionClient {
    uint64_t seed = 0;

    explicit OfflineCaptionEngine(uint64_t seed_ = 0) : seed(seed_) {}
    std::string  complete(const std::string & prompt) override;
    const char * source_tag() const override { return "template"; }
};

// Deterministic paraphrase: reverses clause order while preserving every
// attribute mention, emulating the style-alignment rewrite pass.
struct OfflineParaphraseEngine : CaptionClient {
    std::string  complete(const std::string & prompt) override;
    const char * source_tag() const override { return "template"; }
};

// POSTs the prompt to an HTTP endpoint; the bearer token is read from the
// named environment variable when present.
struct HttpCaptionClient : CaptionClient {
    std::string url;                          // http://host:port/path
    std::string auth_env   = "DALM_API_TOKEN";
    int         timeout_s  = 10;

    explicit HttpCaptionClient(std::string url_) : url(std::move(url_)) {}
    std::string  complete(const std::string & prompt) override;
    const char * source_tag() const override { return "external-LLM"; }
};

struct RetryPolicy {
    int attempts   = 3;
    int backoff_ms = 50; // doubles per retry
};

// Caption from (context, question) through the client, retrying transient
// failures; rethrows after the last attempt.
std::string generate_caption(CaptionClient & client, const std::string & context,
                             const std::string & question, const RetryPolicy & retry = {});

// Second-pass rewrite of a non-empty caption.
std::string rewrite_caption(CaptionClient & client, const std::string & caption,
                            const RetryPolicy & retry = {});

struct CaptionRecord {
    std::string                audio_path;
    AudioMetadata              metadata;
    std::string                rendered_context;
    std::string                question;
    std::string                caption;
    std::optional<std::string> rewritten_caption;
    std::string                source_tag = "template"; // template | external-LLM | rewrite
};

// One dataset line: {audio, metadata, question, answer, tags}.
struct DatasetRecord {
    std::string              audio;
    AudioMetadata            metadata;
    std::string              question;
    std::string              answer;
    std::vector<std::string> tags;
};

DatasetRecord to_dataset_record(const CaptionRecord & r);

std::string   record_to_line(const DatasetRecord & r);
DatasetRecord record_from_line(const std::string & line);

std::vector<DatasetRecord> read_dataset(const std::string & path);
// Atomic write (temp file then rename).
void write_dataset(const std::string & path, const std::vector<DatasetRecord> & records);

struct SourceRow {
    std::string source;
    int64_t     samples = 0;
    double      seconds = 0.0;
};

struct BuildSummary {
    std::vector<SourceRow>   rows;       // per first tag, insertion order
    int64_t                  samples = 0;
    double                   seconds = 0.0;
    int64_t                  duplicates = 0;
    std::vector<std::string> warnings;
};

BuildSummary summarize(const std::vector<DatasetRecord> & records);
// Fixed-width table of per-source sample counts and hours plus a total row.
std::string format_summary(const BuildSummary & s);

struct SplitSpec {
    double   val_fraction = 0.1;
    uint64_t seed         = 0;
};

// Deduplicates on audio path (warning per duplicate), splits by seeded
// shuffle, writes <out_dir>/train.jsonl and <out_dir>/val.jsonl atomically.
BuildSummary build_dataset(const std::vector<DatasetRecord> & records,
                           const std::string & out_dir, const SplitSpec & split);

} // namespace dalm::forge
