// Context rendering, caption engines, HTTP client plumbing, dataset files.
#include "dalm/dataforge.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <thread>
#include <unordered_set>

#include <cctype>
#include <cstring>

#include <httplib.h>
#include <json.hpp>

#include "dalm/errors.hpp"
#include "dalm/hashutil.hpp"
#include "dalm/toyspec.hpp"

namespace dalm::forge {

namespace {

using nlohmann::json;

std::string num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%g", v);
    return buf;
}

std::string mmss(int64_t seconds) {
    char buf[48];
    std::snprintf(buf, sizeof buf, "%02lld:%02lld", (long long)(seconds / 60),
                  (long long)(seconds % 60));
    return buf;
}

std::string lowercased(std::string s) {
    for (char & c : s) c = char(std::tolower((unsigned char)c));
    return s;
}

bool known(const std::string & v) { return !v.empty() && v != "unknown"; }

const char * article(const std::string & word) {
    if (word.empty()) return "a";
    switch (std::tolower((unsigned char)word[0])) {
        case 'a':
        case 'e':
        case 'i':
        case 'o':
        case 'u': return "an";
        default: return "a";
    }
}

// Nearest toy-grid index for a numeric attribute.
template <size_t N> int nearest(const std::array<double, N> & grid, double v) {
    int    best = 0;
    double d    = std::abs(grid[0] - v);
    for (int i = 1; i < int(N); ++i)
        if (std::abs(grid[size_t(i)] - v) < d) {
            d    = std::abs(grid[size_t(i)] - v);
            best = i;
        }
    return best;
}

} // namespace

std::string render_context(const AudioMetadata & m) {
    std::ostringstream os;
    const int64_t end = m.duration_s > 0.0 ? std::llround(std::ceil(m.duration_s)) : 0;
    os << '[' << mmss(0) << " - " << mmss(end) << "]: \"" << m.spoken_text << "\" (";
    os << "Gender: " << (known(m.gender) ? m.gender : "unknown");
    os << ", Accent: " << (known(m.accent) ? m.accent : "unknown");
    os << ", Emotion: " << (known(m.emotion) ? m.emotion : "unknown");
    os << ", Duration: " << (m.duration_s > 0.0 ? num(m.duration_s) + "s" : "unknown");
    os << ", Age: " << (known(m.age) ? m.age : "unknown");
    os << ", Pitch: " << (m.pitch_hz > 0.0 ? num(m.pitch_hz) + " Hz" : "unknown");
    os << ", Volume: " << (m.volume > 0.0 ? num(m.volume) : "unknown");
    os << ", Speaking speed: "
       << (m.speaking_speed > 0.0 ? num(m.speaking_speed) + " tokens/s" : "unknown");
    os << ", Intent: " << (known(m.intent) ? m.intent : "unknown");
    os << ", Spoken text: " << (m.spoken_text.empty() ? "unknown" : m.spoken_text);
    os << ')';
    return os.str();
}

AudioMetadata parse_context(const std::string & context) {
    AudioMetadata m;
    const size_t  mark = context.find("]: \"");
    if (mark != std::string::npos) {
        const size_t open  = mark + 4;
        const size_t close = context.find('"', open);
        if (close != std::string::npos) m.spoken_text = context.substr(open, close - open);
    }
    // Keyed scan: value runs until the next known key or the closing paren.
    static const char * kKeys[] = {"Gender: ",   "Accent: ", "Emotion: ",
                                   "Duration: ", "Age: ",    "Pitch: ",
                                   "Volume: ",   "Speaking speed: ", "Intent: ",
                                   "Spoken text: "};
    auto value_of = [&](const char * key) -> std::string {
        const size_t at = context.rfind(key);
        if (at == std::string::npos) return "unknown";
        const size_t start = at + std::strlen(key);
        size_t       stop  = context.size();
        for (const char * other : kKeys) {
            const size_t p = context.find(other, start);
            if (p != std::string::npos) stop = std::min(stop, p);
        }
        std::string v = context.substr(start, stop - start);
        while (!v.empty() && (v.back() == ' ' || v.back() == ',' || v.back() == ')'))
            v.pop_back();
        return v.empty() ? "unknown" : v;
    };
    m.gender  = value_of("Gender: ");
    m.accent  = value_of("Accent: ");
    m.emotion = value_of("Emotion: ");
    m.age     = value_of("Age: ");
    m.intent  = value_of("Intent: ");
    const std::string dur = value_of("Duration: ");
    if (dur != "unknown") m.duration_s = std::atof(dur.c_str());
    const std::string pitch = value_of("Pitch: ");
    if (pitch != "unknown") m.pitch_hz = std::atof(pitch.c_str());
    const std::string vol = value_of("Volume: ");
    if (vol != "unknown") m.volume = std::atof(vol.c_str());
    const std::string spd = value_of("Speaking speed: ");
    if (spd != "unknown") m.speaking_speed = std::atof(spd.c_str());
    return m;
}

std::string OfflineCaptionEngine::complete(const std::string & prompt) {
    const AudioMetadata m = parse_context(prompt);
    Rng                 rng(seed ^ fnv1a64(prompt.data(), prompt.size()));
    auto                pick = [&](std::string a, std::string b) {
        return rng.below(2) == 0 ? a : b;
    };

    std::vector<std::string> clauses;
    if (known(m.gender)) {
        const std::string g = lowercased(m.gender);
        clauses.push_back(pick("a " + g + " is speaking",
                               "the voice belongs to a " + g));
    }
    if (known(m.age)) {
        const std::string a = lowercased(m.age);
        const std::string art = article(a);
        clauses.push_back(pick("the speaker is " + art + " " + a,
                               "the voice belongs to " + art + " " + a));
    }
    if (known(m.accent)) {
        const std::string c = lowercased(m.accent);
        const std::string art = article(c);
        clauses.push_back(pick("speaking with " + art + " " + c + " accent",
                               "in " + art + " " + c + " accent"));
    }
    if (known(m.emotion)) {
        const std::string e = lowercased(m.emotion);
        clauses.push_back(pick("the tone sounds " + e,
                               "carrying " + std::string(article(e)) + " " + e + " mood"));
    }
    if (m.pitch_hz > 0.0) {
        const std::string p = toy::kPitchWords[size_t(nearest(toy::kPitchesHz, m.pitch_hz))];
        clauses.push_back(pick("the pitch sits near " + p + " hz",
                               "pitched around " + p + " hz"));
    }
    if (m.volume > 0.0) {
        const std::string v = toy::kVolumeWords[size_t(nearest(toy::kVolumes, m.volume))];
        clauses.push_back(pick("at a " + v + " volume", "the delivery is " + v));
    }
    if (m.speaking_speed > 0.0) {
        const std::string s =
            toy::kSpeedWords[size_t(nearest(toy::kSpeedsTps, m.speaking_speed))];
        clauses.push_back(pick("the pace is " + s, "spoken at a " + s + " pace"));
    }
    if (m.duration_s > 0.0) {
        const std::string d = std::to_string(std::llround(m.duration_s));
        clauses.push_back(pick("lasting about " + d + " seconds",
                               "over roughly " + d + " seconds"));
    }
    if (known(m.intent)) {
        const std::string i   = lowercased(m.intent);
        const std::string art = article(i);
        clauses.push_back(pick("the utterance reads as " + art + " " + i,
                               "framed as " + art + " " + i));
    }
    if (!m.spoken_text.empty())
        clauses.push_back(pick("the words say " + lowercased(m.spoken_text),
                               "saying " + lowercased(m.spoken_text)));

    if (clauses.empty()) return "i can hear the audio .";

    std::ostringstream os;
    if (rng.below(2) == 0) os << "i can hear that ";
    for (size_t i = 0; i < clauses.size(); ++i) {
        if (i > 0) os << (rng.below(2) == 0 ? " , " : " and ");
        os << clauses[i];
    }
    os << " .";
    return os.str();
}

std::string OfflineParaphraseEngine::complete(const std::string & prompt) {
    std::string body = prompt;
    bool        had_stop = false;
    if (body.size() >= 2 && body.compare(body.size() - 2, 2, " .") == 0) {
        body.resize(body.size() - 2);
        had_stop = true;
    }
    // Split on the clause joiners, reverse, rejoin uniformly.
    std::vector<std::string> clauses;
    size_t                   pos = 0;
    while (pos < body.size()) {
        const size_t comma = body.find(" , ", pos);
        const size_t conj  = body.find(" and ", pos);
        const size_t cut   = std::min(comma, conj);
        if (cut == std::string::npos) {
            clauses.push_back(body.substr(pos));
            break;
        }
        clauses.push_back(body.substr(pos, cut - pos));
        pos = cut + (cut == comma ? 3 : 5);
    }
    std::reverse(clauses.begin(), clauses.end());
    std::ostringstream os;
    for (size_t i = 0; i < clauses.size(); ++i) {
        if (i > 0) os << " , ";
        os << clauses[i];
    }
    if (had_stop) os << " .";
    return os.str();
}

std::string HttpCaptionClient::complete(const std::string & prompt) {
    std::string rest = url;
    if (rest.rfind("http://", 0) != 0)
        throw ConfigError("http client: url must start with http:// (got '" + url + "')");
    rest = rest.substr(7);
    const size_t slash = rest.find('/');
    std::string  hostport = slash == std::string::npos ? rest : rest.substr(0, slash);
    std::string  path     = slash == std::string::npos ? "/" : rest.substr(slash);
    int          port     = 80;
    const size_t colon    = hostport.find(':');
    std::string  host     = hostport;
    if (colon != std::string::npos) {
        host = hostport.substr(0, colon);
        port = std::atoi(hostport.c_str() + colon + 1);
    }
    if (host.empty() || port <= 0) throw ConfigError("http client: bad url '" + url + "'");

    httplib::Client cli(host, port);
    cli.set_connection_timeout(timeout_s);
    cli.set_read_timeout(timeout_s);
    httplib::Headers headers;
    if (const char * token = std::getenv(auth_env.c_str()); token && *token)
        headers.emplace("Authorization", std::string("Bearer ") + token);

    auto res = cli.Post(path, headers, prompt, "text/plain");
    if (!res)
        throw IoError("http request to " + url +
                      " failed: " + httplib::to_string(res.error()));
    if (res->status != 200)
        throw IoError("http request to " + url + " returned status " +
                      std::to_string(res->status));
    return res->body;
}

namespace {

template <typename F>
std::string with_retry(F fn, const RetryPolicy & retry) {
    int delay = retry.backoff_ms;
    for (int attempt = 1;; ++attempt) {
        try {
            return fn();
        } catch (const IoError &) {
            if (attempt >= std::max(1, retry.attempts)) throw;
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            delay *= 2;
        }
    }
}

} // namespace

std::string generate_caption(CaptionClient & client, const std::string & context,
                             const std::string & question, const RetryPolicy & retry) {
    return with_retry([&] { return client.complete(context + "\n" + question); }, retry);
}

std::string rewrite_caption(CaptionClient & client, const std::string & caption,
                            const RetryPolicy & retry) {
    if (caption.empty()) throw InvalidInputError("rewrite_caption: empty caption");
    return with_retry([&] { return client.complete(caption); }, retry);
}

DatasetRecord to_dataset_record(const CaptionRecord & r) {
    DatasetRecord d;
    d.audio    = r.audio_path;
    d.metadata = r.metadata;
    d.question = r.question;
    d.answer   = r.rewritten_caption ? *r.rewritten_caption : r.caption;
    d.tags     = {r.source_tag, "caption"};
    return d;
}

namespace {

json metadata_json(const AudioMetadata & m) {
    return json{{"gender", m.gender},
                {"age", m.age},
                {"accent", m.accent},
                {"emotion", m.emotion},
                {"pitch_hz", m.pitch_hz},
                {"volume", m.volume},
                {"speaking_speed", m.speaking_speed},
                {"duration_s", m.duration_s},
                {"intent", m.intent},
                {"spoken_text", m.spoken_text}};
}

AudioMetadata metadata_from_json(const json & j) {
    AudioMetadata m;
    m.gender         = j.at("gender").get<std::string>();
    m.age            = j.at("age").get<std::string>();
    m.accent         = j.at("accent").get<std::string>();
    m.emotion        = j.at("emotion").get<std::string>();
    m.pitch_hz       = j.at("pitch_hz").get<double>();
    m.volume         = j.at("volume").get<double>();
    m.speaking_speed = j.at("speaking_speed").get<double>();
    m.duration_s     = j.at("duration_s").get<double>();
    m.intent         = j.at("intent").get<std::string>();
    m.spoken_text    = j.at("spoken_text").get<std::string>();
    return m;
}

} // namespace

std::string record_to_line(const DatasetRecord & r) {
    json j{{"audio", r.audio},
           {"metadata", metadata_json(r.metadata)},
           {"question", r.question},
           {"answer", r.answer},
           {"tags", r.tags}};
    return j.dump();
}

DatasetRecord record_from_line(const std::string & line) {
    try {
        const json    j = json::parse(line);
        DatasetRecord r;
        r.audio    = j.at("audio").get<std::string>();
        r.metadata = metadata_from_json(j.at("metadata"));
        r.question = j.at("question").get<std::string>();
        r.answer   = j.at("answer").get<std::string>();
        r.tags     = j.at("tags").get<std::vector<std::string>>();
        return r;
    } catch (const json::exception & e) {
        throw IntegrityError(std::string("bad dataset line: ") + e.what());
    }
}

std::vector<DatasetRecord> read_dataset(const std::string & path) {
    std::ifstream is(path);
    if (!is) throw IoError("cannot open " + path);
    std::vector<DatasetRecord> out;
    std::string                line;
    while (std::getline(is, line)) {
        if (line.empty()) continue;
        out.push_back(record_from_line(line));
    }
    return out;
}

void write_dataset(const std::string & path, const std::vector<DatasetRecord> & records) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp);
        if (!os) throw IoError("cannot create " + tmp);
        for (const DatasetRecord & r : records) os << record_to_line(r) << '\n';
        if (!os) throw IoError("write failed for " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
}

BuildSummary summarize(const std::vector<DatasetRecord> & records) {
    BuildSummary s;
    for (const DatasetRecord & r : records) {
        const std::string source = r.tags.empty() ? "untagged" : r.tags[0];
        auto row = std::find_if(s.rows.begin(), s.rows.end(),
                                [&](const SourceRow & x) { return x.source == source; });
        if (row == s.rows.end()) {
            s.rows.push_back(SourceRow{source, 0, 0.0});
            row = s.rows.end() - 1;
        }
        row->samples += 1;
        row->seconds += r.metadata.duration_s;
        s.samples += 1;
        s.seconds += r.metadata.duration_s;
    }
    return s;
}

std::string format_summary(const BuildSummary & s) {
    size_t width = 6; // "source"
    for (const SourceRow & r : s.rows) width = std::max(width, r.source.size());
    std::ostringstream os;
    os << std::left << std::setw(int(width) + 2) << "source" << std::right << std::setw(10)
       << "samples" << std::setw(10) << "hours" << '\n';
    char hours[32];
    for (const SourceRow & r : s.rows) {
        std::snprintf(hours, sizeof hours, "%.2f", r.seconds / 3600.0);
        os << std::left << std::setw(int(width) + 2) << r.source << std::right
           << std::setw(10) << r.samples << std::setw(10) << hours << '\n';
    }
    std::snprintf(hours, sizeof hours, "%.2f", s.seconds / 3600.0);
    os << std::left << std::setw(int(width) + 2) << "total" << std::right << std::setw(10)
       << s.samples << std::setw(10) << hours << '\n';
    return os.str();
}

BuildSummary build_dataset(const std::vector<DatasetRecord> & records,
                           const std::string & out_dir, const SplitSpec & split) {
    if (records.empty()) throw InvalidInputError("build_dataset: empty record list");
    if (split.val_fraction < 0.0 || split.val_fraction >= 1.0)
        throw ConfigError("build_dataset: val_fraction must be in [0, 1)");

    std::vector<DatasetRecord>      unique;
    std::unordered_set<std::string> seen;
    int64_t                         duplicates = 0;
    std::vector<std::string>        warnings;
    for (const DatasetRecord & r : records) {
        if (!seen.insert(r.audio).second) {
            ++duplicates;
            warnings.push_back("duplicate audio path '" + r.audio + "' skipped");
            continue;
        }
        unique.push_back(r);
    }

    std::vector<size_t> order(unique.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(split.seed);
    for (size_t i = order.size(); i > 1; --i)
        std::swap(order[i - 1], order[size_t(rng.below(i))]);

    const int64_t n_val = std::llround(double(unique.size()) * split.val_fraction);
    std::vector<DatasetRecord> val, train;
    for (size_t i = 0; i < order.size(); ++i)
        (int64_t(i) < n_val ? val : train).push_back(unique[order[i]]);

    std::filesystem::create_directories(out_dir);
    write_dataset(out_dir + "/train.jsonl", train);
    write_dataset(out_dir + "/val.jsonl", val);

    BuildSummary s  = summarize(unique);
    s.duplicates    = duplicates;
    s.warnings      = std::move(warnings);
    return s;
}

} // namespace dalm::forge
