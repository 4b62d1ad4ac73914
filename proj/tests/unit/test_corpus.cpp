#include <gtest/gtest.h>

#include <set>

#include "scale_scribe/corpus.hpp"
#include "scale_scribe/errors.hpp"
#include "test_support.hpp"

namespace ss = scale_scribe;
using test_support::assessment_record;
using test_support::corpus_from_text;
using test_support::transcript_record;

namespace {

std::vector<int> ratings_of(int value) { return std::vector<int>(24, value); }

std::string lines(std::initializer_list<nlohmann::json> records) {
    std::string out;
    for (const auto& r : records) out += r.dump() + "\n";
    return out;
}

}  // namespace

TEST(Corpus, ThreePatientsTwoVisitsGiveSixEncounters) {
    test_support::SyntheticSpec spec;
    spec.patients = 3;
    spec.visits = 2;
    const auto corpus = test_support::synthetic_corpus(spec);
    EXPECT_EQ(corpus.encounter_count(), 6u);
    EXPECT_EQ(corpus.transcript_count(), 6u);
    EXPECT_EQ(corpus.assessment_count(), 6u);
}

TEST(Corpus, RatingZeroIsOutOfRangeAndNamesTheItem) {
    auto r = ratings_of(3);
    r[6] = 0;
    try {
        corpus_from_text(lines({assessment_record("A", 0, r)}));
        FAIL() << "expected RatingOutOfRange";
    } catch (const ss::RatingOutOfRange& e) {
        const std::string what = e.what();
        EXPECT_NE(what.find("item 7"), std::string::npos) << what;
        EXPECT_NE(what.find("A"), std::string::npos) << what;
    }
    auto high = ratings_of(3);
    high[0] = 8;
    EXPECT_THROW(corpus_from_text(lines({assessment_record("A", 0, high)})), ss::RatingOutOfRange);
}

TEST(Corpus, WrongRatingCountIsRejected) {
    EXPECT_THROW(corpus_from_text(lines({assessment_record("A", 0, std::vector<int>(23, 2))})), ss::ValidationError);
}

TEST(Corpus, SecondOpenTranscriptIsDuplicate) {
    EXPECT_THROW(corpus_from_text(lines({transcript_record("A", 0, "open", "en", "first"),
                                         transcript_record("A", 0, "open", "en", "second")})),
                 ss::DuplicateRecord);
    EXPECT_THROW(corpus_from_text(lines({assessment_record("A", 0, ratings_of(2)),
                                         assessment_record("A", 0, ratings_of(3))})),
                 ss::DuplicateRecord);
}

TEST(Corpus, ParseErrorCarriesLineNumber) {
    const std::string text = lines({transcript_record("A", 0, "open", "en", "x")}) + "{broken\n";
    try {
        corpus_from_text(text);
        FAIL() << "expected ParseError";
    } catch (const ss::ParseError& e) {
        ASSERT_TRUE(e.line().has_value());
        EXPECT_EQ(*e.line(), 2u);
    }
    EXPECT_THROW(corpus_from_text(R"({"type":"transcript","patient_id":"A","visit_index":0,"kind":"video","language":"en","text":"x"})"
                                  "\n"),
                 ss::ParseError);
}

TEST(Corpus, AssessmentWithoutTranscriptIsExcluded) {
    const auto corpus = corpus_from_text(lines({assessment_record("A", 0, ratings_of(2)),
                                                transcript_record("B", 0, "open", "en", "hello"),
                                                assessment_record("B", 0, ratings_of(3))}));
    const auto cases = ss::eval_cases(corpus, {});
    ASSERT_EQ(cases.size(), 1u);
    EXPECT_EQ(cases[0].patient_id(), "B");
}

TEST(Corpus, PsychsIsPreferredWhenBothKindsAreSelected) {
    const auto corpus = corpus_from_text(lines({transcript_record("A", 0, "open", "en", "open text"),
                                                transcript_record("A", 0, "psychs", "en", "psychs text"),
                                                assessment_record("A", 0, ratings_of(2))}));
    auto cases = ss::eval_cases(corpus, {});
    ASSERT_EQ(cases.size(), 1u);
    EXPECT_EQ(cases[0].transcript.kind, ss::TranscriptKind::psychs);

    ss::Selection open_only;
    open_only.kinds = {ss::TranscriptKind::open};
    cases = ss::eval_cases(corpus, open_only);
    ASSERT_EQ(cases.size(), 1u);
    EXPECT_EQ(cases[0].transcript.text, "open text");
}

TEST(Corpus, LanguageFilterOnEnglishCorpusIsEmpty) {
    test_support::SyntheticSpec spec;
    spec.patients = 4;
    const auto corpus = test_support::synthetic_corpus(spec);
    ss::Selection sel;
    sel.languages = std::set<std::string>{"es", "ko"};
    EXPECT_TRUE(ss::eval_cases(corpus, sel).empty());
    sel.languages = std::set<std::string>{"en"};
    EXPECT_EQ(ss::eval_cases(corpus, sel).size(), 4u);
}

TEST(Corpus, EvalCasesAreUniqueAndTotalsAreSums) {
    test_support::SyntheticSpec spec;
    spec.patients = 7;
    spec.visits = 3;
    spec.kinds = {"open", "psychs"};
    const auto corpus = test_support::synthetic_corpus(spec);
    std::set<std::pair<std::string, int>> keys;
    for (const auto& c : ss::eval_cases(corpus, {})) {
        EXPECT_TRUE(keys.insert({c.patient_id(), c.visit_index()}).second);
        int sum = 0;
        for (int r : c.truth.ratings) sum += r;
        EXPECT_EQ(c.truth.total(), sum);
        EXPECT_EQ(c.transcript.patient_id, c.patient_id());
        EXPECT_EQ(c.transcript.visit_index, c.visit_index());
    }
    EXPECT_EQ(keys.size(), 21u);
}

TEST(Corpus, TimelinesThresholdAndOrdering) {
    const auto corpus = corpus_from_text(lines({
        transcript_record("A", 2, "open", "en", "a2"), assessment_record("A", 2, ratings_of(4)),
        transcript_record("A", 0, "open", "en", "a0"), assessment_record("A", 0, ratings_of(2)),
        transcript_record("A", 1, "open", "en", "a1"), assessment_record("A", 1, ratings_of(3)),
        transcript_record("B", 0, "open", "en", "b0"), assessment_record("B", 0, ratings_of(5)),
    }));
    const auto two = ss::timelines(corpus, 2, {});
    ASSERT_EQ(two.size(), 1u);
    EXPECT_EQ(two[0].patient_id, "A");
    ASSERT_EQ(two[0].cases.size(), 3u);
    for (int v = 0; v < 3; ++v) EXPECT_EQ(two[0].cases[static_cast<std::size_t>(v)].visit_index(), v);

    EXPECT_EQ(ss::timelines(corpus, 1, {}).size(), 2u);
    EXPECT_EQ(ss::timelines(corpus, 4, {}).size(), 0u);
    EXPECT_THROW(ss::timelines(corpus, 0, {}), std::invalid_argument);
}

TEST(Corpus, TimelinePatientSetsAreNested) {
    test_support::SyntheticSpec spec;
    spec.patients = 12;
    spec.visits = 4;
    auto text = test_support::synthetic_corpus_jsonl(spec);
    // Drop trailing visits for some patients so timeline lengths vary.
    std::string kept;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        const auto j = nlohmann::json::parse(line);
        const int p = std::stoi(j["patient_id"].get<std::string>().substr(1));
        if (j["visit_index"].get<int>() < 1 + p % 4) kept += line + "\n";
    }
    const auto corpus = corpus_from_text(kept);
    for (int k = 2; k <= 5; ++k) {
        std::set<std::string> larger, smaller;
        for (const auto& t : ss::timelines(corpus, k - 1, {})) larger.insert(t.patient_id);
        for (const auto& t : ss::timelines(corpus, k, {})) smaller.insert(t.patient_id);
        EXPECT_TRUE(std::includes(larger.begin(), larger.end(), smaller.begin(), smaller.end())) << k;
    }
}

TEST(Corpus, IngestExportRoundTrips) {
    test_support::SyntheticSpec spec;
    spec.patients = 5;
    spec.visits = 2;
    spec.kinds = {"open", "psychs"};
    spec.languages = {"en", "es"};
    const auto input = test_support::synthetic_corpus_jsonl(spec);
    const auto corpus = corpus_from_text(input);

    std::ostringstream first;
    corpus.export_jsonl(first);
    std::ostringstream second;
    corpus_from_text(first.str()).export_jsonl(second);
    EXPECT_EQ(first.str(), second.str());

    auto record_set = [](const std::string& text) {
        std::multiset<std::string> out;
        std::istringstream in(text);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) out.insert(nlohmann::json::parse(line).dump());
        return out;
    };
    EXPECT_EQ(record_set(input), record_set(first.str()));
}

TEST(Corpus, RedactionTokensPassThrough) {
    const auto corpus = corpus_from_text(lines({transcript_record("A", 0, "open", "en", "My name is [REDACTED]."),
                                                assessment_record("A", 0, ratings_of(1))}));
    EXPECT_EQ(ss::eval_cases(corpus, {})[0].transcript.text, "My name is [REDACTED].");
}
