#include "ul/synth.hpp"

#include <cmath>
#include <functional>
#include <set>
#include <stdexcept>

namespace ul {

void GenConfig::validate() const {
    if (train < 1 || valid < 1 || test < 1) throw std::runtime_error("gen config: split sizes must be >= 1");
    if (copy_rate < 0.0 || copy_rate > 1.0) throw std::runtime_error("gen config: copy_rate must be in [0,1]");
    if (repeat_rate < 0.0 || repeat_rate > 1.0) {
        throw std::runtime_error("gen config: repeat_rate must be in [0,1]");
    }
    if (zipf_exponent < 0.0) throw std::runtime_error("gen config: zipf exponent must be >= 0");
}

namespace synth {

namespace {

const std::vector<std::string> kFoods = {
    "apple pie",      "banana bread",  "carrot cake", "cheese pizza",  "chicken soup",
    "chocolate cake", "corn bread",    "fried rice",  "fruit salad",   "garlic bread",
    "grilled cheese", "ice cream",     "lemon cake",  "mushroom soup", "onion rings",
    "pasta salad",    "peanut butter", "pumpkin pie", "tomato soup",   "veggie burgers"};

const std::vector<std::string> kActivities = {
    "running", "swimming", "hiking",  "dancing", "cooking", "fishing", "reading", "painting",
    "singing", "camping",  "cycling", "skiing",  "bowling", "chess",   "yoga",    "golf"};

const std::vector<std::string> kJobs = {"teacher", "doctor", "nurse",  "farmer", "writer",
                                        "banker",  "chef",   "pilot",  "lawyer", "artist",
                                        "plumber", "barber", "tailor", "dentist"};

const std::vector<std::string> kColors = {"red",  "blue",  "green", "yellow", "purple", "orange",
                                          "pink", "black", "white", "brown",  "silver", "gold"};

const std::vector<std::string> kPets = {"dog",    "cat",   "bird",   "fish",   "rabbit", "hamster",
                                        "turtle", "snake", "lizard", "parrot", "pony",   "goat"};

const std::vector<std::string> kCities = {"boston",   "chicago", "denver",  "seattle",
                                          "portland", "austin",  "dallas",  "miami",
                                          "atlanta",  "phoenix", "houston", "detroit"};

const std::vector<std::string> kSeasons = {"spring", "summer", "autumn", "winter"};

const std::vector<std::string> kDrinks = {"coffee", "tea",      "juice", "soda",
                                          "milk",   "lemonade", "cocoa", "cider"};

const std::vector<std::string> kInstruments = {"guitar", "piano",   "drums", "violin",
                                               "flute",  "trumpet", "banjo", "cello"};

const std::vector<std::string> kMusic = {"jazz",      "rock", "blues", "country",
                                         "classical", "pop",  "folk",  "reggae"};

enum AttrRelation { kJob = 0, kColor, kPet, kCity, kSeason, kDrink, kInstrument, kMusicTaste };

constexpr int kNumAttr = 8;
constexpr int kNumFoods = 20;
constexpr int kNumActivities = 16;

const std::vector<std::string>* attr_values(int relation) {
    switch (relation) {
        case kJob: return &kJobs;
        case kColor: return &kColors;
        case kPet: return &kPets;
        case kCity: return &kCities;
        case kSeason: return &kSeasons;
        case kDrink: return &kDrinks;
        case kInstrument: return &kInstruments;
        case kMusicTaste: return &kMusic;
        default: throw std::runtime_error("unknown attribute relation");
    }
}

bool relation_is_food(int relation) { return relation >= kNumAttr && relation < kNumAttr + kNumFoods; }

const std::string& sentiment_item(int relation) {
    if (relation_is_food(relation)) return kFoods[static_cast<size_t>(relation - kNumAttr)];
    return kActivities[static_cast<size_t>(relation - kNumAttr - kNumFoods)];
}

}  // namespace

int relation_count() { return kNumAttr + kNumFoods + kNumActivities; }

bool is_sentiment(int relation) { return relation >= kNumAttr; }

int value_count(int relation) {
    if (is_sentiment(relation)) return 2;  // positive / negative polarity
    return static_cast<int>(attr_values(relation)->size());
}

int food_relation(int food_index) { return kNumAttr + food_index; }

std::string render_fact(const FactTriple& t, int family, int variant) {
    const bool self = t.subject == 0;
    if (is_sentiment(t.relation)) {
        const std::string& item = sentiment_item(t.relation);
        const bool positive = t.value == 0;
        if (family == 0) {
            if (positive) {
                if (variant % 2 == 0) return self ? "i like " + item + " ." : "my sister likes " + item + " .";
                return self ? "i love " + item + " ." : "my sister loves " + item + " .";
            }
            if (variant % 3 == 0) {
                return self ? "i do not like " + item + " ." : "my sister does not like " + item + " .";
            }
            if (variant % 3 == 1) return self ? "i hate " + item + " ." : "my sister hates " + item + " .";
            return self ? "i despise " + item + " ." : "my sister despises " + item + " .";
        }
        if (positive) {
            if (relation_is_food(t.relation) && variant % 2 == 0) {
                return self ? item + " is my favorite food ." : item + " is the favorite food of my sister .";
            }
            return self ? "i really enjoy " + item + " ." : "my sister really enjoys " + item + " .";
        }
        if (relation_is_food(t.relation) && variant % 2 == 0) {
            return self ? "i never eat " + item + " ." : "my sister never eats " + item + " .";
        }
        return self ? "i stay away from " + item + " ." : "my sister stays away from " + item + " .";
    }

    const std::string v = (*attr_values(t.relation))[static_cast<size_t>(t.value)];
    switch (t.relation) {
        case kJob:
            if (family == 0) {
                if (variant % 2 == 0) return self ? "i am a " + v + " ." : "my sister is a " + v + " .";
                return self ? "i am really a " + v + " ." : "my sister is really a " + v + " .";
            }
            return self ? "i work as a " + v + " ." : "my sister works as a " + v + " .";
        case kColor:
            if (family == 0) {
                if (variant % 2 == 0) return "my favorite color is " + v + " .";
                return "my favorite color is really " + v + " .";
            }
            return v + " is the color i like most .";
        case kPet:
            if (family == 0) {
                if (variant % 2 == 0) return self ? "i have a pet " + v + " ." : "my sister has a pet " + v + " .";
                return self ? "i own a pet " + v + " ." : "my sister owns a pet " + v + " .";
            }
            return self ? "my pet is a " + v + " ." : "the pet of my sister is a " + v + " .";
        case kCity:
            if (family == 0) {
                if (variant % 2 == 0) return self ? "i am from " + v + " ." : "my sister is from " + v + " .";
                return self ? "i come from " + v + " ." : "my sister comes from " + v + " .";
            }
            return self ? "i live in " + v + " ." : "my sister lives in " + v + " .";
        case kSeason:
            if (family == 0) {
                if (variant % 2 == 0) return "my favorite season is " + v + " .";
                return "my favorite season is really " + v + " .";
            }
            return "i like " + v + " the most .";
        case kDrink:
            if (family == 0) {
                if (variant % 2 == 0) return "my favorite drink is " + v + " .";
                return "my favorite drink is really " + v + " .";
            }
            return self ? "i always drink " + v + " ." : "my sister always drinks " + v + " .";
        case kInstrument:
            if (family == 0) {
                if (variant % 2 == 0) return self ? "i play the " + v + " ." : "my sister plays the " + v + " .";
                return self ? "i can play the " + v + " ." : "my sister can play the " + v + " .";
            }
            return self ? "i know how to play the " + v + " ." : "my sister knows how to play the " + v + " .";
        case kMusicTaste:
            if (family == 0) {
                if (variant % 2 == 0) {
                    return self ? "i listen to " + v + " music ." : "my sister listens to " + v + " music .";
                }
                return self ? "i really listen to " + v + " music ."
                            : "my sister really listens to " + v + " music .";
            }
            return v + " music is my favorite .";
        default:
            throw std::runtime_error("render_fact: unknown relation");
    }
}

FactTriple contradict(const FactTriple& t, Rng& rng) {
    FactTriple out = t;
    if (is_sentiment(t.relation)) {
        out.value = 1 - t.value;  // flip polarity
        return out;
    }
    const int n = value_count(t.relation);
    int v = rng.index(static_cast<size_t>(n - 1));
    if (v >= t.value) ++v;
    out.value = v;
    return out;
}

}  // namespace synth

namespace {

using synth::contradict;
using synth::is_sentiment;
using synth::render_fact;

int zipf_index(int n, double exponent, Rng& rng) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int r = 0; r < n; ++r) {
        w[static_cast<size_t>(r)] = 1.0 / std::pow(static_cast<double>(r + 1), exponent);
    }
    return rng.categorical(w);
}

FactTriple draw_fact(int subject, int relation, const GenConfig& cfg, Rng& rng) {
    FactTriple t;
    t.subject = subject;
    t.relation = relation;
    if (is_sentiment(relation)) {
        t.value = rng.uniform() < 0.65 ? 0 : 1;
    } else {
        t.value = zipf_index(synth::value_count(relation), cfg.zipf_exponent, rng);
    }
    return t;
}

// persona: one liked food, one activity opinion, one attribute fact
struct Persona {
    FactTriple food, activity, attribute;

    FactTriple fact(int i) const { return i == 0 ? food : (i == 1 ? activity : attribute); }
};

Persona draw_persona(const GenConfig& cfg, Rng& rng) {
    Persona p;
    p.food = FactTriple{0, synth::food_relation(zipf_index(20, cfg.zipf_exponent, rng)), 0};
    p.activity = draw_fact(0, 28 + rng.index(16), cfg, rng);  // activity sentiment relations
    p.attribute = draw_fact(0, rng.index(8), cfg, rng);
    return p;
}

std::vector<std::string> render_persona(const Persona& p, Rng& rng) {
    std::vector<std::string> out;
    out.push_back(render_fact(p.food, 0, rng.index(2)));
    out.push_back(render_fact(p.activity, 0, rng.index(3)));
    out.push_back(render_fact(p.attribute, 0, rng.index(2)));
    return out;
}

std::string really_chain(Rng& rng) {
    // geometric-ish intensifier chain; the data never repeats a trigram until
    // the chain reaches length four
    std::string out = "really";
    int k = 1;
    while (k < 6 && rng.uniform() < 0.52) {
        out += " really";
        ++k;
    }
    return out;
}

DialogueExample gen_dialogue_example(const GenConfig& cfg, Rng& rng) {
    const Persona persona = draw_persona(cfg, rng);

    DialogueExample ex;
    ex.context = render_persona(persona, rng);

    // pattern rates derived from the configured copy share
    double p_echo = cfg.copy_rate * (2.0 / 3.0) / (0.75 * 0.55);
    double p_open = cfg.copy_rate / (3.0 * 0.4);
    const double cap = p_echo + p_open;
    if (cap > 0.95) {
        p_echo *= 0.95 / cap;
        p_open *= 0.95 / cap;
    }
    const double chat_share = 1.0 - p_echo - p_open;
    const double chain_share =
        chat_share > 0.0 ? std::min(1.0, cfg.repeat_rate / (chat_share * 0.52)) : 0.0;

    const std::string food = synth::render_fact(persona.food, 0, 0);  // "i like <f> ."
    const std::string food_item = food.substr(7, food.size() - 9);    // strip frame words

    const double u = rng.uniform();
    if (u < p_echo) {
        const bool matched = rng.uniform() < 0.75;
        std::string asked = food_item;
        if (!matched) {
            FactTriple other{0, synth::food_relation(rng.index(20)), 0};
            while (other.relation == persona.food.relation) {
                other.relation = synth::food_relation(rng.index(20));
            }
            const std::string s = synth::render_fact(other, 0, 0);
            asked = s.substr(7, s.size() - 9);
        }
        ex.history = {"do you like " + asked + " ?"};
        if (!matched) {
            ex.target = "no i do not .";
        } else if (rng.uniform() < 0.55) {
            ex.target = "yes i like " + asked + " .";
        } else {
            ex.target = "yes i do .";
        }
    } else if (u < p_echo + p_open) {
        ex.history = {"tell me about yourself ."};
        if (rng.uniform() < 0.4) {
            ex.target = ex.context[static_cast<size_t>(rng.index(3))];
        } else {
            ex.target = "i like many things .";
        }
    } else {
        if (rng.uniform() < chain_share) {
            if (rng.uniform() < 0.5) {
                ex.history = {"tell me more about that ."};
                ex.target = "i " + really_chain(rng) + " like it .";
            } else {
                ex.history = {"how is your day going ?"};
                ex.target = "my day is going " + really_chain(rng) + " well .";
            }
        } else {
            if (rng.uniform() < 0.5) {
                ex.history = {"hello how are you today ?"};
                ex.target = rng.uniform() < 0.5 ? "i am doing well thanks ." : "i am doing fine today .";
            } else {
                ex.history = {"nice to meet you ."};
                ex.target = rng.uniform() < 0.5 ? "happy to chat with you ." : "good to talk with you .";
            }
        }
    }
    return ex;
}

void fill_split(int count, const GenConfig& cfg, Rng& rng, std::set<std::string>& seen, Corpus& out,
                const std::function<DialogueExample(const GenConfig&, Rng&)>& gen) {
    int64_t attempts = 0;
    const int64_t limit = static_cast<int64_t>(count) * 1000 + 10000;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > limit) throw std::runtime_error("synth: example space exhausted");
        DialogueExample ex = gen(cfg, rng);
        if (!seen.insert(corpus_line(ex)).second) continue;  // keep splits disjoint
        out.push_back(std::move(ex));
    }
}

}  // namespace

DialogueCorpora gen_dialogue_corpus(const GenConfig& config) {
    config.validate();
    Rng rng(config.seed * 2654435761ull + 101);
    DialogueCorpora out;
    std::set<std::string> seen;
    fill_split(config.train, config, rng, seen, out.train, gen_dialogue_example);
    fill_split(config.valid, config, rng, seen, out.valid, gen_dialogue_example);
    fill_split(config.test, config, rng, seen, out.test, gen_dialogue_example);
    return out;
}

namespace {

// label schedules: two-utterance positives cycle E/TE/N at 35/35/30 per 20,
// full-dialogue positives alternate TE/N
NliLabel two_utt_label(int j) {
    const int m = j % 20;
    if (m < 7) return NliLabel::entail;
    if (m < 14) return NliLabel::triple_entail;
    return NliLabel::neutral;
}

NliLabel full_label(int j) { return j % 2 == 0 ? NliLabel::triple_entail : NliLabel::neutral; }

bool is_two_utterance(int i) { return i % 5 < 3; }  // 60 / 40 split

std::string render_positive(const FactTriple& t, NliLabel label, int premise_variant, const GenConfig& cfg,
                            Rng& rng) {
    switch (label) {
        case NliLabel::entail: {
            // same-surface-family paraphrase, forced away from the premise variant
            const int variants = is_sentiment(t.relation) && t.value == 1 ? 3 : 2;
            int v = rng.index(static_cast<size_t>(variants - 1));
            if (v >= premise_variant % variants) ++v;
            return render_fact(t, 0, v);
        }
        case NliLabel::triple_entail:
            return render_fact(t, 1, rng.index(2));
        case NliLabel::neutral: {
            int rel = rng.index(static_cast<size_t>(synth::relation_count() - 1));
            if (rel >= t.relation) ++rel;
            const FactTriple other = draw_fact(t.subject, rel, cfg, rng);
            return render_fact(other, rng.index(2), rng.index(3));
        }
        case NliLabel::contradict:
            break;
    }
    throw std::runtime_error("render_positive: bad label");
}

DialogueExample gen_two_utt(const GenConfig& cfg, Rng& rng, NliLabel label, bool with_negative) {
    const int subject = rng.uniform() < 0.7 ? 0 : 1;
    const int relation = rng.index(static_cast<size_t>(synth::relation_count()));
    const FactTriple t = draw_fact(subject, relation, cfg, rng);
    const int premise_variant = rng.index(is_sentiment(relation) && t.value == 1 ? 3 : 2);

    DialogueExample ex;
    ex.context = {render_fact(t, 0, premise_variant)};
    ex.label = label;
    if (label == NliLabel::contradict) {
        ex.target = render_fact(contradict(t, rng), 0, rng.index(3));
    } else {
        ex.target = render_positive(t, label, premise_variant, cfg, rng);
    }
    if (with_negative) ex.negative = render_fact(contradict(t, rng), 0, rng.index(3));
    return ex;
}

DialogueExample gen_full_dialogue(const GenConfig& cfg, Rng& rng, NliLabel label, bool with_negative) {
    const Persona persona = draw_persona(cfg, rng);

    DialogueExample ex;
    ex.context = render_persona(persona, rng);
    ex.history = {"hello how are you today ?", "i am doing well thanks ."};
    const FactTriple anchor = persona.fact(rng.index(3));
    ex.label = label;
    if (label == NliLabel::contradict) {
        ex.target = render_fact(contradict(anchor, rng), 0, rng.index(3));
    } else {
        ex.target = render_positive(anchor, label, /*premise_variant=*/0, cfg, rng);
    }
    if (with_negative) ex.negative = render_fact(contradict(anchor, rng), 0, rng.index(3));
    return ex;
}

void fill_nli_split(int count, const GenConfig& cfg, Rng& rng, std::set<std::string>& seen, Corpus& out,
                    bool negatives, bool with_pairs) {
    int two_j = 0, full_j = 0;
    int64_t attempts = 0;
    const int64_t limit = static_cast<int64_t>(count) * 1000 + 10000;
    while (static_cast<int>(out.size()) < count) {
        if (++attempts > limit) throw std::runtime_error("synth: nli example space exhausted");
        const bool two = is_two_utterance(static_cast<int>(out.size()));
        NliLabel label;
        if (negatives) {
            label = NliLabel::contradict;
        } else {
            label = two ? two_utt_label(two_j) : full_label(full_j);
        }
        DialogueExample ex = two ? gen_two_utt(cfg, rng, label, with_pairs)
                                 : gen_full_dialogue(cfg, rng, label, with_pairs);
        if (!seen.insert(corpus_line(ex)).second) continue;
        (two ? two_j : full_j) += 1;
        out.push_back(std::move(ex));
    }
}

}  // namespace

NliCorpora gen_nli_corpus(const GenConfig& config) {
    config.validate();
    Rng rng(config.seed * 2654435761ull + 977);
    NliCorpora out;
    std::set<std::string> seen;
    fill_nli_split(config.train, config, rng, seen, out.train_pos, false, false);
    fill_nli_split(config.train, config, rng, seen, out.train_neg, true, false);
    fill_nli_split(config.valid, config, rng, seen, out.valid_pairs, false, true);
    fill_nli_split(config.test, config, rng, seen, out.test_pairs, false, true);
    return out;
}

}  // namespace ul
