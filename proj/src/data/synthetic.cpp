#include "todkat/data/synthetic.hpp"

#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "todkat/numerics/rng.hpp"

namespace todkat {

namespace {

using Phrases = std::array<const char*, 3>;

struct EmotionTails {
  const char* emotion;
  std::array<const char*, 9> heads;
  // xIntent, xReact, oReact, sNeed, sWant, oWant, sEffect, oEffect, sAttr
  std::array<Phrases, 9> tails;
};

const EmotionTails kTable[] = {
    {"neutral",
     {"read the daily paper", "walked to the corner", "sat on the bench", "checked the clock",
      "opened the window", "tied my shoes", "waited for the bus", "wrote a short note", "turned on the light"},
     {{{"to pass the time", "to get ready", "to stay informed"},
       {"calm", "indifferent", "fine"},
       {"unbothered", "neutral", "relaxed"},
       {"to have time", "to get up", "to be nearby"},
       {"to continue the day", "to rest", "to go home"},
       {"to carry on", "to say hello", "to keep going"},
       {"nods", "shrugs", "moves on"},
       {"nods back", "keeps working", "says nothing"},
       {"ordinary", "steady", "practical"}}}},
    {"anger",
     {"was cheated by someone", "got blamed unfairly", "was insulted in public", "had my idea stolen",
      "got cut in line", "was lied to again", "had my car scratched", "got ignored all day", "was yelled at rudely"},
     {{{"to get justice", "to confront them", "to demand respect"},
       {"angry", "furious", "annoyed"},
       {"defensive", "irritated", "hostile"},
       {"to be wronged", "to lose patience", "to feel disrespected"},
       {"to yell at them", "to get revenge", "to file a complaint"},
       {"to calm them down", "to argue back", "to walk away"},
       {"clenches fists", "shouts loudly", "slams the door"},
       {"gets shouted at", "backs off", "argues back"},
       {"hot tempered", "furious", "resentful"}}}},
    {"disgust",
     {"smelled rotten eggs", "found a hair in my plate", "stepped in dog poop", "saw a cockroach crawl",
      "touched slimy goo", "tasted spoiled milk", "saw someone spit", "found maggots inside", "smelled stinky socks"},
     {{{"to get away", "to clean it up", "to avoid the mess"},
       {"disgusted", "grossed out", "nauseous"},
       {"repulsed", "sickened", "queasy"},
       {"to notice the smell", "to look closely", "to touch it"},
       {"to wash hands", "to throw it away", "to leave quickly"},
       {"to cover their nose", "to look away", "to scrub it"},
       {"gags", "wrinkles nose", "feels sick"},
       {"gags too", "steps back", "holds breath"},
       {"squeamish", "picky", "fastidious"}}}},
    {"fear",
     {"heard footsteps at night", "saw a huge spider", "got lost in the dark", "heard a loud scream",
      "was followed by a stranger", "felt the ground shake", "saw a snake nearby", "was alone in a storm",
      "got a threatening call"},
     {{{"to stay safe", "to escape", "to hide"},
       {"scared", "terrified", "afraid"},
       {"worried", "alarmed", "nervous"},
       {"to be alone", "to hear a noise", "to be in danger"},
       {"to run away", "to call for help", "to lock the door"},
       {"to protect them", "to comfort them", "to call the police"},
       {"trembles", "screams", "freezes in place"},
       {"rushes over", "gets scared too", "holds them close"},
       {"timid", "fearful", "anxious"}}}},
    {"happiness",
     {"passed the final exam", "won a big prize", "got a warm hug", "received a nice gift", "heard great news",
      "finished the marathon", "adopted a cute puppy", "found a lost ring", "got engaged last night"},
     {{{"to celebrate", "to share the joy", "to enjoy the moment"},
       {"happy", "joyful", "delighted"},
       {"glad for them", "cheerful", "pleased"},
       {"to work hard", "to be lucky", "to try again"},
       {"to throw a party", "to tell everyone", "to smile all day"},
       {"to congratulate them", "to hug them", "to join the party"},
       {"smiles widely", "laughs out loud", "jumps for joy"},
       {"cheers loudly", "claps happily", "smiles back"},
       {"lucky", "cheerful", "grateful"}}}},
    {"sadness",
     {"lost my best friend", "lost my old dog", "failed the driving test", "got dumped by text",
      "missed the last goodbye", "was left all alone", "broke my favorite mug", "lost the old house",
      "said farewell forever"},
     {{{"to grieve", "to be comforted", "to remember the past"},
       {"sad", "heartbroken", "miserable"},
       {"sympathetic", "sorry for them", "gloomy"},
       {"to lose something", "to care deeply", "to say goodbye"},
       {"to cry", "to be alone", "to look at old pictures"},
       {"to console them", "to bring flowers", "to sit with them"},
       {"cries", "sighs deeply", "stays in bed"},
       {"hugs them", "tears up", "offers tissues"},
       {"sorrowful", "lonely", "sensitive"}}}},
    {"surprise",
     {"saw an old classmate", "got an unexpected visit", "found money in a coat", "saw a double rainbow",
      "got a sudden call", "won without trying", "met a famous actor", "found a secret door",
      "got an early delivery"},
     {{{"to find out more", "to check it out", "to understand"},
       {"surprised", "amazed", "astonished"},
       {"shocked", "stunned", "curious"},
       {"to not expect it", "to be unaware", "to be caught off guard"},
       {"to ask questions", "to tell a friend", "to take a closer look"},
       {"to explain", "to see the reaction", "to share the story"},
       {"gasps", "jaw drops", "eyes widen"},
       {"laughs at the reaction", "gasps too", "grins"},
       {"curious", "open minded", "easily startled"}}}},
};

const char* const kPronouns[] = {"i", "we", "my friend", "she", "he"};
const char* const kConnectors[] = {"at the", "near the", "with the", "after the", "about the"};
const char* const kFillers[] = {"today", "again", "yesterday", "just now", "this morning"};
const char* const kEndings[] = {".", "!", ",", "?"};

}  // namespace

const std::vector<std::string>& all_relation_names() {
  static const std::vector<std::string> names = {"xIntent", "xReact",  "oReact",  "sNeed", "sWant",
                                                 "oWant",   "sEffect", "oEffect", "sAttr"};
  return names;
}

const std::vector<ToyEvent>& toy_events() {
  static const std::vector<ToyEvent> events = [] {
    std::vector<ToyEvent> out;
    for (const auto& e : kTable) {
      for (std::size_t i = 0; i < e.heads.size(); ++i) {
        ToyEvent ev{e.emotion, e.heads[i], {}};
        for (std::size_t r = 0; r < 9; ++r) ev.tails[all_relation_names()[r]] = e.tails[r][(i + r) % 3];
        out.push_back(std::move(ev));
      }
    }
    return out;
  }();
  return events;
}

std::vector<EventTriple> toy_kb_triples() {
  std::vector<EventTriple> out;
  for (const auto& ev : toy_events()) {
    for (const auto& rel : all_relation_names()) out.push_back({ev.head, rel, ev.tails.at(rel)});
  }
  return out;
}

std::string serialize_kb(const std::vector<EventTriple>& triples) {
  std::string out;
  for (const auto& t : triples) {
    nlohmann::ordered_json j;
    j["head"] = t.head;
    j["relation"] = t.relation;
    j["tail"] = t.tail;
    out += j.dump() + "\n";
  }
  return out;
}

const std::vector<TopicBlock>& topic_blocks() {
  static const std::vector<TopicBlock> blocks = {
      {"food", "happiness",
       {"pizza", "pasta", "soup", "dinner", "restaurant", "chef", "dessert", "salad", "kitchen", "bakery", "noodles",
        "menu"}},
      {"office", "anger",
       {"boss", "meeting", "deadline", "report", "office", "manager", "overtime", "memo", "coworker", "printer",
        "inbox", "project"}},
      {"travel", "surprise",
       {"airport", "flight", "train", "hotel", "passport", "luggage", "beach", "ticket", "museum", "map", "island",
        "tour"}},
      {"health", "fear",
       {"doctor", "hospital", "clinic", "fever", "nurse", "medicine", "surgery", "xray", "pharmacy", "symptom",
        "injury", "checkup"}},
      {"family", "sadness",
       {"grandma", "funeral", "childhood", "photo", "letter", "sister", "nephew", "anniversary", "cousin", "album",
        "attic", "memorial"}},
      {"chores", "disgust",
       {"garbage", "sink", "laundry", "mold", "drain", "trash", "toilet", "fridge", "dishes", "basement", "gutter",
        "sewer"}},
  };
  return blocks;
}

const std::vector<std::string>& function_words() {
  static const std::vector<std::string> words = {"i",   "we",   "my",    "friend", "she",   "he",
                                                 "at",  "near", "with",  "after",  "about", "the",
                                                 "and", "today", "again", "yesterday", "just", "now",
                                                 "this", "morning"};
  return words;
}

void SynthConfig::validate() const {
  if (n_topics == 0 || n_topics > topic_blocks().size()) {
    throw std::invalid_argument("SynthConfig: n_topics must be in [1, " + std::to_string(topic_blocks().size()) + "]");
  }
  if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("SynthConfig: rho must lie in [0, 1]");
  if (min_utterances == 0 || min_utterances > max_utterances) {
    throw std::invalid_argument("SynthConfig: need 1 <= min_utterances <= max_utterances");
  }
  if (!(topic_free_fraction >= 0.0 && topic_free_fraction <= 1.0)) {
    throw std::invalid_argument("SynthConfig: topic_free_fraction must lie in [0, 1]");
  }
  if (dev_fraction < 0 || test_fraction < 0 || dev_fraction + test_fraction >= 1.0) {
    throw std::invalid_argument("SynthConfig: dev and test fractions must leave room for training data");
  }
}

SyntheticCorpus generate_synthetic(const SynthConfig& config) {
  config.validate();
  const auto labels = EmotionLabelSet::ekman_with_neutral();
  Rng root(config.seed);
  std::vector<Dialogue> all;
  SyntheticCorpus corpus;
  for (std::size_t d = 0; d < config.n_dialogues; ++d) {
    Rng rng = root.split("dialogue").split(d);
    Dialogue dlg;
    char id[32];
    std::snprintf(id, sizeof id, "syn-%05zu", d);
    dlg.id = id;
    const auto topic = static_cast<std::size_t>(rng.below(config.n_topics));
    const auto& block = topic_blocks()[topic];
    const auto signature = labels.id(block.signature);
    const auto n = config.min_utterances + rng.below(config.max_utterances - config.min_utterances + 1);
    for (std::size_t u = 0; u < n; ++u) {
      const std::size_t label = rng.uniform() < config.rho ? signature : static_cast<std::size_t>(rng.below(labels.size()));
      const auto& row = kTable[label];
      std::string text = kPronouns[rng.below(std::size(kPronouns))];
      text += ' ';
      text += row.heads[rng.below(row.heads.size())];
      if (rng.uniform() >= config.topic_free_fraction) {
        text += ' ';
        text += kConnectors[rng.below(std::size(kConnectors))];
        for (std::size_t w = 0; w < config.topic_words; ++w) {
          text += (w == 0 ? " " : " and the ");
          text += block.words[rng.below(block.words.size())];
        }
      }
      if (rng.uniform() < 0.5) {
        text += ' ';
        text += kFillers[rng.below(std::size(kFillers))];
      }
      text += ' ';
      text += kEndings[rng.below(std::size(kEndings))];
      dlg.utterances.push_back(text);
      dlg.labels.push_back(labels.names[label]);
      dlg.speakers.push_back(u % 2 == 0 ? "A" : "B");
    }
    corpus.topic_of[dlg.id] = topic;
    all.push_back(std::move(dlg));
  }
  std::vector<std::size_t> order(all.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = root.split("splits");
  split_rng.shuffle(order);
  const auto n_test = static_cast<std::size_t>(config.test_fraction * static_cast<double>(all.size()));
  const auto n_dev = static_cast<std::size_t>(config.dev_fraction * static_cast<double>(all.size()));
  std::vector<std::uint8_t> bucket(all.size(), 0);
  for (std::size_t i = 0; i < order.size(); ++i) bucket[order[i]] = i < n_test ? 2 : (i < n_test + n_dev ? 1 : 0);
  for (std::size_t i = 0; i < all.size(); ++i) {
    (bucket[i] == 0 ? corpus.train : bucket[i] == 1 ? corpus.dev : corpus.test).push_back(all[i]);
  }
  return corpus;
}

void write_synthetic(const SyntheticCorpus& corpus, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_corpus(dir / "train.jsonl", corpus.train);
  save_corpus(dir / "dev.jsonl", corpus.dev);
  save_corpus(dir / "test.jsonl", corpus.test);
  std::ofstream topics(dir / "topics.tsv", std::ios::trunc);
  topics << "dialogue_id\ttopic\n";
  for (const auto& [id, t] : corpus.topic_of) topics << id << '\t' << topic_blocks()[t].name << '\n';
  save_split_manifest(dir / "splits.txt", {{"train", "train.jsonl"}, {"dev", "dev.jsonl"}, {"test", "test.jsonl"}});
}

}  // namespace todkat
