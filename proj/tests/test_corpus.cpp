#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <set>

#include "perceptlens/corpus.hpp"
#include "perceptlens/synthetic.hpp"

using namespace perceptlens;

namespace {

fs::path temp_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / ("perceptlens_test_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

}  // namespace

TEST_CASE("parse_chat keeps participant speech and strips codes") {
    const Transcript t = parse_chat("*PAR: the boy [//] uh is falling .\n*INV: mhm .\n");
    REQUIRE(t.cleaned_text == "the boy uh is falling .");
}

TEST_CASE("parse_chat rejects interviewer-only input") {
    REQUIRE_THROWS_AS(parse_chat("*INV: tell me everything .\n"), EmptyTranscriptError);
}

TEST_CASE("parse_chat keeps PAR payloads in order across interleaved tiers") {
    // hand-built fixture; expected output derived by applying the documented
    // cleaning rules manually
    const std::string raw =
        "@Begin\n"
        "@ID: eng|corpus|PAR|||||Participant||\n"
        "*PAR: well the mother is washing [x 2] dishes .\n"
        "%mor: ignored tier\n"
        "*INV: anything else ?\n"
        "*PAR: &-uh the <water is> [//] water is spilling +...\n"
        "*INV: mhm .\n"
        "*PAR: and the boy is on the stool .\n"
        "@End\n";
    const Transcript t = parse_chat(raw);
    REQUIRE(t.cleaned_text ==
            "well the mother is washing dishes . uh the water is water is spilling and the boy is "
            "on the stool .");
}

TEST_CASE("parse_chat continuation lines extend the participant tier") {
    const std::string raw = "*PAR: the boy is reaching\n\tfor the cookie jar .\n";
    REQUIRE(parse_chat(raw).cleaned_text == "the boy is reaching for the cookie jar .");
}

TEST_CASE("parse_chat strict mode flags unmarked lines") {
    const std::string raw = "*PAR: fine .\nthis line has no marker\n";
    ChatParseOptions strict;
    strict.strict = true;
    REQUIRE_THROWS_AS(parse_chat(raw, strict), MalformedLineError);

    std::vector<std::string> warnings;
    ChatParseOptions lenient;
    lenient.warnings = &warnings;
    REQUIRE(parse_chat(raw, lenient).cleaned_text == "fine .");
    REQUIRE(warnings.size() == 1);
}

TEST_CASE("parse_chat cleaning is idempotent on its own output") {
    std::mt19937_64 gen(41);
    const std::vector<std::string> payloads = {
        "the boy [//] uh is falling .",
        "&-um she <is saying> [x 3] is saying something +/.",
        "cookies (be)cause he wants them [?] .",
        "well &=laughs that is a mess .",
    };
    for (const std::string& payload : payloads) {
        const Transcript first = parse_chat("*PAR: " + payload + "\n");
        const Transcript second = parse_chat("*PAR: " + first.cleaned_text + "\n");
        REQUIRE(second.cleaned_text == first.cleaned_text);
    }
    (void)gen;
}

TEST_CASE("no interviewer token leaks into cleaned text") {
    const std::string raw =
        "*INV: describe everything happening please .\n"
        "*PAR: boy takes cookies .\n"
        "*INV: wonderful anything more ?\n"
        "*PAR: no more .\n";
    const Transcript t = parse_chat(raw);
    std::set<std::string> participant_tokens;
    for (const std::string& tok : split(t.cleaned_text, ' ')) participant_tokens.insert(tok);
    for (const std::string& inv_token :
         {"describe", "everything", "happening", "please", "wonderful", "anything"}) {
        REQUIRE(participant_tokens.count(inv_token) == 0);
    }
}

TEST_CASE("binarize_diagnosis is total and maps only HealthyControl to Healthy") {
    REQUIRE(binarize_diagnosis(DiagnosisLabel::HealthyControl) == BinaryDiagnosis::Healthy);
    std::size_t healthy = 0, dementia = 0;
    for (const auto& [name, label] : diagnosis_label_table()) {
        (binarize_diagnosis(label) == BinaryDiagnosis::Healthy ? healthy : dementia)++;
    }
    REQUIRE(healthy == 1);
    REQUIRE(dementia == 5);
    REQUIRE(binarize_diagnosis(DiagnosisLabel::ProbableAD) == BinaryDiagnosis::Dementia);
    REQUIRE(binarize_diagnosis(DiagnosisLabel::Other) == BinaryDiagnosis::Dementia);
}

TEST_CASE("parse_diagnosis_label accepts exactly six strings") {
    REQUIRE(parse_diagnosis_label("Healthy Control") == DiagnosisLabel::HealthyControl);
    REQUIRE(parse_diagnosis_label("Possible AD") == DiagnosisLabel::PossibleAD);
    REQUIRE_THROWS_AS(parse_diagnosis_label("healthy control"), ValidationError);
    REQUIRE_THROWS_AS(parse_diagnosis_label("Dementia"), ValidationError);
}

TEST_CASE("load_corpus over plain JSONL counts and rejects correctly") {
    const fs::path dir = temp_dir("corpus_plain");
    write_file(dir / "a.jsonl",
               R"({"transcript_id":"t1","participant_id":"p1","text":"the boy is here ."})"
               "\n"
               R"({"transcript_id":"t2","participant_id":"p1","text":"water spills .","diagnosis":"AD"})"
               "\n"
               R"({"transcript_id":"t3","participant_id":"p2","text":"a stool .","diagnosis":"Healthy Control"})"
               "\n");
    write_file(dir / "b.jsonl",
               R"({"transcript_id":"t4","participant_id":"p3","text":"cookies ."})"
               "\n"
               R"({"transcript_id":"t5","participant_id":"p4","text":"jar lid ."})"
               "\n");

    const LoadResult result = load_corpus({dir / "a.jsonl", dir / "b.jsonl"}, CorpusFormat::Plain);
    REQUIRE(result.corpus.transcripts.size() == 5);
    REQUIRE(result.rejected.empty());
    REQUIRE(result.corpus.transcripts[1].diagnosis == BinaryDiagnosis::Dementia);
    REQUIRE(result.corpus.transcripts[2].diagnosis == BinaryDiagnosis::Healthy);
    REQUIRE_FALSE(result.corpus.transcripts[0].diagnosis.has_value());
    REQUIRE(result.corpus.source_manifest.size() == 2);
    REQUIRE(result.corpus.source_manifest[0].records == 3);
}

TEST_CASE("load_corpus rejects duplicate transcript ids naming the id") {
    const fs::path dir = temp_dir("corpus_dup");
    write_file(dir / "dup.jsonl",
               R"({"transcript_id":"t1","participant_id":"p1","text":"one ."})"
               "\n"
               R"({"transcript_id":"t1","participant_id":"p2","text":"two ."})"
               "\n");
    try {
        load_corpus({dir / "dup.jsonl"}, CorpusFormat::Plain);
        FAIL("expected DuplicateIdError");
    } catch (const DuplicateIdError& e) {
        REQUIRE(std::string(e.what()).find("t1") != std::string::npos);
    }
}

TEST_CASE("load_corpus reports empty and missing inputs") {
    const fs::path dir = temp_dir("corpus_empty");
    write_file(dir / "empty.jsonl", "");
    REQUIRE_THROWS_AS(load_corpus({dir / "empty.jsonl"}, CorpusFormat::Plain), EmptyCorpusError);
    REQUIRE_THROWS_AS(load_corpus({dir / "absent.jsonl"}, CorpusFormat::Plain), IoError);
}

TEST_CASE("load_corpus is deterministic byte for byte") {
    const fs::path dir = temp_dir("corpus_det");
    write_file(dir / "c.jsonl",
               R"({"transcript_id":"t1","participant_id":"p1","text":"boy [x 2] here .","diagnosis":"MCI"})"
               "\n");
    const std::string first = serialize_corpus(load_corpus({dir / "c.jsonl"}, CorpusFormat::Plain).corpus);
    const std::string second = serialize_corpus(load_corpus({dir / "c.jsonl"}, CorpusFormat::Plain).corpus);
    REQUIRE(first == second);
    REQUIRE(deserialize_corpus(first).transcripts.size() == 1);
}

TEST_CASE("chat mode derives ids from filenames") {
    const fs::path dir = temp_dir("corpus_chat");
    write_file(dir / "018-2.cha", "*PAR: the boy steals cookies .\n");
    const LoadResult result = load_corpus({dir / "018-2.cha"}, CorpusFormat::Chat);
    REQUIRE(result.corpus.transcripts.size() == 1);
    REQUIRE(result.corpus.transcripts[0].transcript_id == "018-2");
    REQUIRE(result.corpus.transcripts[0].participant_id == "018");
}

TEST_CASE("synthetic fixture mirrors the 514-transcript corpus shape") {
    const fs::path dir = temp_dir("corpus_synth");
    const FeatureRegistry registry = FeatureRegistry::load(fs::path(PERCEPTLENS_DATA_DIR) /
                                                           "feature_registry.json");
    SyntheticOptions options;
    options.transcripts = 514;
    write_synthetic_fixture(dir, registry, options);
    const LoadResult result = load_corpus({dir / "corpus.jsonl"}, CorpusFormat::Plain);
    REQUIRE(result.corpus.transcripts.size() == 514);
    std::size_t dementia = 0;
    std::map<std::string, std::size_t> sessions;
    for (const Transcript& t : result.corpus.transcripts) {
        REQUIRE(t.diagnosis.has_value());
        if (*t.diagnosis == BinaryDiagnosis::Dementia) ++dementia;
        ++sessions[t.participant_id];
    }
    REQUIRE(dementia == 283);
    std::size_t multi = 0;
    for (const auto& [participant, count] : sessions) {
        if (count > 1) ++multi;
    }
    REQUIRE(multi == 100);
}
