#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "fincurate/dedup.hpp"

#include <algorithm>
#include <random>
#include <set>

using namespace fincurate;
using namespace fincurate::dedup;

// Brute-force exact Jaccard over shingle sets: the oracle, independent of the
// minhash path.
static double exact_jaccard(const std::string & a, const std::string & b) {
    auto sa = shingles(a);
    auto sb = shingles(b);
    std::set<std::string> set_a(sa.begin(), sa.end());
    std::set<std::string> set_b(sb.begin(), sb.end());
    std::size_t inter = 0;
    for (const auto & s : set_a) {
        inter += set_b.count(s);
    }
    std::size_t uni = set_a.size() + set_b.size() - inter;
    return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

static std::string join(const std::vector<std::string> & words) {
    std::string out;
    for (const auto & w : words) {
        out += out.empty() ? w : " " + w;
    }
    return out;
}

TEST_CASE("identical texts produce identical signatures") {
    std::string text = "the payment failed after the bank returned a deemed status for the reference";
    auto a = signature(text);
    auto b = signature(text);
    CHECK(a.exact_hash == b.exact_hash);
    CHECK(a.sketch == b.sketch);
    CHECK(sketch_agreement(a, b) == 1.0);
}

TEST_CASE("disjoint vocabularies give near-zero sketch agreement") {
    auto a = signature("alpha beta gamma delta epsilon zeta eta theta iota kappa");
    auto b = signature("one two three four five six seven eight nine ten");
    CHECK(sketch_agreement(a, b) <= 0.05);
}

TEST_CASE("constructed Jaccard-0.5 pair estimates within the sketch band") {
    // 14 shared words -> 10 shared shingles; 5 unique words per side -> 5
    // unique shingles each: J = 10/20 = 0.5 exactly.
    std::vector<std::string> shared, ua, ub;
    for (int i = 0; i < 14; ++i) {
        shared.push_back("s" + std::to_string(i));
    }
    for (int i = 0; i < 5; ++i) {
        ua.push_back("a" + std::to_string(i));
        ub.push_back("b" + std::to_string(i));
    }
    auto words_a = shared;
    words_a.insert(words_a.end(), ua.begin(), ua.end());
    auto words_b = shared;
    words_b.insert(words_b.end(), ub.begin(), ub.end());
    std::string text_a = join(words_a);
    std::string text_b = join(words_b);

    REQUIRE(exact_jaccard(text_a, text_b) == doctest::Approx(0.5).epsilon(1e-12));
    double agreement = sketch_agreement(signature(text_a), signature(text_b));
    CHECK(agreement >= 0.4);
    CHECK(agreement <= 0.6);
}

TEST_CASE("short documents fall back to unigram shingles") {
    auto sh = shingles("only three words");
    REQUIRE(sh.size() == 3);
    CHECK(sh[0] == "only");
    auto sig_a = signature("only three words");
    auto sig_b = signature("only three words");
    CHECK(sig_a.exact_hash == sig_b.exact_hash);
}

static cleanse::CuratedDocument doc_of(std::string id, std::string text) {
    cleanse::CuratedDocument doc;
    doc.id = std::move(id);
    doc.record.text = std::move(text);
    return doc;
}

TEST_CASE("exact duplicate drops and keeps the first-seen twin") {
    std::string text = "one two three four five six seven eight nine ten eleven twelve";
    auto result = dedup_documents({doc_of("A", text), doc_of("copy", text),
                                   doc_of("B", "an unrelated document about something else entirely different here")},
                                  0.8);
    REQUIRE(result.kept.size() == 2);
    CHECK(result.kept[0].id == "A");
    CHECK(result.kept[1].id == "B");
    REQUIRE(result.dropped.size() == 1);
    CHECK(result.dropped[0].doc_id == "copy");
    CHECK(result.dropped[0].kept_twin_id == "A");
    CHECK(result.dropped[0].exact);
}

TEST_CASE("threshold 1.0 drops nothing via the near-dup path") {
    std::mt19937_64 rng(5);
    std::vector<cleanse::CuratedDocument> docs;
    for (int d = 0; d < 30; ++d) {
        std::vector<std::string> words;
        for (int w = 0; w < 30; ++w) {
            words.push_back("w" + std::to_string(rng() % 500) + "_" + std::to_string(d));
        }
        docs.push_back(doc_of("doc" + std::to_string(d), join(words)));
    }
    auto result = dedup_documents(docs, 1.0);
    CHECK(result.kept.size() == docs.size());
    CHECK(result.dropped.empty());
}

// deterministic word soup with a planted paraphrase: `mutations` words changed
static std::string paraphrase(const std::string & base, std::size_t mutations, std::mt19937_64 & rng) {
    std::vector<std::string> words;
    std::size_t start = 0;
    while (start < base.size()) {
        auto end = base.find(' ', start);
        if (end == std::string::npos) {
            end = base.size();
        }
        words.push_back(base.substr(start, end - start));
        start = end + 1;
    }
    for (std::size_t m = 0; m < mutations; ++m) {
        words[rng() % words.size()] = "changed" + std::to_string(rng() % 1000);
    }
    return join(words);
}

TEST_CASE("20-doc fixture with 4 planted high-similarity pairs drops exactly the twins") {
    std::mt19937_64 rng(1207);
    std::vector<cleanse::CuratedDocument> docs;
    std::vector<std::string> planted_twins;

    for (int d = 0; d < 16; ++d) {
        std::vector<std::string> words;
        for (int w = 0; w < 120; ++w) {
            words.push_back("base" + std::to_string(d) + "_" + std::to_string(w));
        }
        docs.push_back(doc_of("orig" + std::to_string(d), join(words)));
    }
    // twins of docs 0..3 with one mutated word each (Jaccard >= 0.9 by construction)
    for (int d = 0; d < 4; ++d) {
        auto twin = paraphrase(docs[d].record.text, 1, rng);
        REQUIRE(exact_jaccard(docs[d].record.text, twin) >= 0.9);
        auto id = "twin" + std::to_string(d);
        planted_twins.push_back(id);
        docs.push_back(doc_of(id, twin));
    }

    auto result = dedup_documents(docs, 0.8);
    REQUIRE(result.dropped.size() == 4);
    std::set<std::string> dropped_ids;
    for (const auto & rec : result.dropped) {
        dropped_ids.insert(rec.doc_id);
        CHECK(rec.kept_twin_id == "orig" + rec.doc_id.substr(4));
    }
    CHECK(dropped_ids == std::set<std::string>(planted_twins.begin(), planted_twins.end()));
}

TEST_CASE("near-dup decisions agree with brute-force Jaccard outside the noise band") {
    std::mt19937_64 rng(77);
    const double threshold = 0.8;
    std::vector<cleanse::CuratedDocument> docs;
    for (int d = 0; d < 40; ++d) {
        std::vector<std::string> words;
        for (int w = 0; w < 80; ++w) {
            words.push_back("v" + std::to_string(d) + "_" + std::to_string(w));
        }
        docs.push_back(doc_of("d" + std::to_string(d), join(words)));
        if (d % 5 == 0) {
            std::size_t mutations = rng() % 30; // spread across both sides of the threshold
            docs.push_back(
                doc_of("d" + std::to_string(d) + "m", paraphrase(docs.back().record.text, mutations, rng)));
        }
    }
    auto result = dedup_documents(docs, threshold);

    std::set<std::string> dropped;
    for (const auto & rec : result.dropped) {
        dropped.insert(rec.doc_id);
    }
    // oracle: a doc drops iff some earlier oracle-kept doc has exact Jaccard
    // >= threshold; compared only outside (threshold +- 0.1)
    std::vector<std::size_t> oracle_kept;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        double best = 0.0;
        for (std::size_t k : oracle_kept) {
            best = std::max(best, exact_jaccard(docs[k].record.text, docs[i].record.text));
        }
        bool oracle_drop = best >= threshold;
        if (!oracle_drop) {
            oracle_kept.push_back(i);
        }
        if (best < threshold - 0.1 || best > threshold + 0.1) {
            CHECK(dropped.count(docs[i].id) == (oracle_drop ? 1u : 0u));
        }
    }
}

TEST_CASE("keep-set is prefix-stable") {
    std::mt19937_64 rng(31);
    std::vector<cleanse::CuratedDocument> docs;
    for (int d = 0; d < 25; ++d) {
        std::vector<std::string> words;
        for (int w = 0; w < 40; ++w) {
            words.push_back("p" + std::to_string(rng() % 200));
        }
        docs.push_back(doc_of("p" + std::to_string(d), join(words)));
    }
    auto full = dedup_documents(docs, 0.8);
    std::vector<cleanse::CuratedDocument> prefix(docs.begin(), docs.begin() + 15);
    auto part = dedup_documents(prefix, 0.8);

    std::set<std::string> kept_full, kept_part;
    for (const auto & doc : full.kept) {
        kept_full.insert(doc.id);
    }
    for (const auto & doc : part.kept) {
        kept_part.insert(doc.id);
    }
    for (const auto & doc : prefix) {
        CHECK(kept_full.count(doc.id) == kept_part.count(doc.id));
    }
}

TEST_CASE("output never contains an exact-hash pair") {
    std::mt19937_64 rng(8);
    std::vector<cleanse::CuratedDocument> docs;
    for (int d = 0; d < 60; ++d) {
        std::vector<std::string> words;
        for (int w = 0; w < 10; ++w) {
            words.push_back("q" + std::to_string(rng() % 12)); // heavy collisions
        }
        docs.push_back(doc_of("q" + std::to_string(d), join(words)));
    }
    auto result = dedup_documents(docs, 0.9);
    std::set<std::pair<std::uint64_t, std::uint64_t>> hashes;
    for (const auto & doc : result.kept) {
        auto h = hash128(doc.record.text);
        CHECK(hashes.insert({h.hi, h.lo}).second);
    }
}

TEST_CASE("drop report is one json object per line") {
    std::string text = "one two three four five six seven eight nine ten eleven twelve";
    auto result = dedup_documents({doc_of("A", text), doc_of("B", text)}, 0.8);
    auto report = drop_report_jsonl(result.dropped);
    CHECK(report.find("\"doc_id\":\"B\"") != std::string::npos);
    CHECK(report.find("\"twin_id\":\"A\"") != std::string::npos);
    CHECK(std::count(report.begin(), report.end(), '\n') == 1);
}

TEST_CASE("threshold outside (0,1] is rejected") {
    CHECK_THROWS_AS(Deduper(0.0), config_error);
    CHECK_THROWS_AS(Deduper(1.5), config_error);
}
