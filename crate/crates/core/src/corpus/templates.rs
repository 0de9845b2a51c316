//! Closed base-language vocabularies and four-slot sentence templates.
//!
//! Every template has exactly [`SLOTS`] slots so a language's word order can
//! be expressed as a permutation of slot positions. A slot is either a
//! placeholder (`{name}`, `{value}`, `{attr}`) or a phrase of plain words.

pub const SLOTS: usize = 4;

pub type Slots = [&'static str; SLOTS];

pub struct Relation {
    pub id: &'static str,
    pub question: Slots,
    pub answer: Slots,
    pub paraphrase: Slots,
    pub values: &'static [&'static str],
}

const CITIES: &[&str] = &["paris", "lisbon", "cairo", "lima", "oslo", "delhi", "quito", "tunis"];
const YEARS: &[&str] = &["1948", "1952", "1961", "1967", "1973", "1979", "1984", "1990"];
const GENRES: &[&str] = &[
    "fantasy", "horror", "poetry", "satire", "romance", "mystery", "drama", "memoir",
];
const AWARDS: &[&str] = &[
    "hugo", "nebula", "booker", "pulitzer", "edgar", "costa", "nobel", "orwell",
];
const FATHER_JOBS: &[&str] = &[
    "baker", "pilot", "surgeon", "farmer", "sailor", "teacher", "lawyer", "miner",
];
const MOTHER_JOBS: &[&str] = &[
    "nurse", "painter", "chemist", "tailor", "judge", "potter", "dancer", "weaver",
];
const UNIVERSITIES: &[&str] = &[
    "oxford", "harvard", "sorbonne", "yale", "kyoto", "uppsala", "leiden", "bologna",
];
const PETS: &[&str] = &["cat", "parrot", "dog", "tortoise", "rabbit", "ferret", "horse", "goat"];
const INSTRUMENTS: &[&str] = &["piano", "violin", "cello", "flute", "harp", "drums", "guitar", "oboe"];
const COLORS: &[&str] = &["red", "blue", "green", "amber", "violet", "silver", "crimson", "teal"];
const PUBLISHERS: &[&str] = &[
    "penguin", "harper", "vintage", "faber", "orbit", "tor", "knopf", "scribner",
];
const DEBUTS: &[&str] = &[
    "embers", "tides", "lanterns", "echoes", "thorns", "harbors", "ashes", "meadows",
];
const SPORTS: &[&str] = &[
    "tennis", "chess", "rowing", "fencing", "cricket", "golf", "sailing", "boxing",
];
const FOODS: &[&str] = &[
    "pasta",
    "curry",
    "sushi",
    "tacos",
    "dumplings",
    "paella",
    "stew",
    "falafel",
];
const RESIDENCES: &[&str] = &[
    "berlin", "madrid", "toronto", "sydney", "nairobi", "seoul", "dublin", "vienna",
];
const PARTNER_JOBS: &[&str] = &[
    "architect",
    "engineer",
    "actor",
    "banker",
    "florist",
    "doctor",
    "editor",
    "singer",
];
const TIMES: &[&str] = &[
    "morning",
    "evening",
    "night",
    "dawn",
    "noon",
    "midnight",
    "dusk",
    "afternoon",
];
const LANGUAGES: &[&str] = &[
    "spanish", "german", "arabic", "hindi", "russian", "swahili", "korean", "greek",
];
const HOBBIES: &[&str] = &[
    "gardening",
    "hiking",
    "knitting",
    "cycling",
    "baking",
    "climbing",
    "fishing",
    "pottery",
];
const COUNTS: &[&str] = &["two", "three", "four", "five", "six", "seven", "eight", "nine"];

/// Author-profile relations in the order profiles use them.
pub const AUTHOR_RELATIONS: &[Relation] = &[
    Relation {
        id: "birthplace",
        question: ["where", "was", "{name}", "born"],
        answer: ["{name}", "was born", "in", "{value}"],
        paraphrase: ["{value}", "is the", "birthplace of", "{name}"],
        values: CITIES,
    },
    Relation {
        id: "birth_year",
        question: ["when", "was", "{name}", "born"],
        answer: ["{name}", "was born", "in the year", "{value}"],
        paraphrase: ["{value}", "is the", "birth year of", "{name}"],
        values: YEARS,
    },
    Relation {
        id: "genre",
        question: ["what", "genre does", "{name}", "write"],
        answer: ["{name}", "writes", "mostly", "{value}"],
        paraphrase: ["{value}", "is the", "main genre of", "{name}"],
        values: GENRES,
    },
    Relation {
        id: "award",
        question: ["which", "award did", "{name}", "win"],
        answer: ["{name}", "won", "the award", "{value}"],
        paraphrase: ["{value}", "was the", "award won by", "{name}"],
        values: AWARDS,
    },
    Relation {
        id: "father_job",
        question: ["what", "did the father of", "{name}", "do"],
        answer: ["the father of", "{name}", "was a", "{value}"],
        paraphrase: ["{value}", "was the", "job of the father of", "{name}"],
        values: FATHER_JOBS,
    },
    Relation {
        id: "mother_job",
        question: ["what", "did the mother of", "{name}", "do"],
        answer: ["the mother of", "{name}", "was a", "{value}"],
        paraphrase: ["{value}", "was the", "job of the mother of", "{name}"],
        values: MOTHER_JOBS,
    },
    Relation {
        id: "university",
        question: ["where", "did", "{name}", "study"],
        answer: ["{name}", "studied", "at", "{value}"],
        paraphrase: ["{value}", "is where", "{name}", "studied"],
        values: UNIVERSITIES,
    },
    Relation {
        id: "pet",
        question: ["which", "pet does", "{name}", "keep"],
        answer: ["{name}", "keeps", "a pet", "{value}"],
        paraphrase: ["{value}", "is the", "pet of", "{name}"],
        values: PETS,
    },
    Relation {
        id: "instrument",
        question: ["which", "instrument does", "{name}", "play"],
        answer: ["{name}", "plays", "the", "{value}"],
        paraphrase: ["{value}", "is the", "instrument of", "{name}"],
        values: INSTRUMENTS,
    },
    Relation {
        id: "color",
        question: ["which", "color does", "{name}", "love"],
        answer: ["{name}", "loves", "the color", "{value}"],
        paraphrase: ["{value}", "is the", "favorite color of", "{name}"],
        values: COLORS,
    },
    Relation {
        id: "publisher",
        question: ["who", "is the", "publisher of", "{name}"],
        answer: ["{name}", "is published", "by", "{value}"],
        paraphrase: ["{value}", "publishes", "the books of", "{name}"],
        values: PUBLISHERS,
    },
    Relation {
        id: "debut",
        question: ["what", "was the first book of", "{name}", "called"],
        answer: ["the first book of", "{name}", "was called", "{value}"],
        paraphrase: ["{value}", "was the", "debut of", "{name}"],
        values: DEBUTS,
    },
    Relation {
        id: "sport",
        question: ["which", "sport does", "{name}", "enjoy"],
        answer: ["{name}", "enjoys", "playing", "{value}"],
        paraphrase: ["{value}", "is the", "sport of", "{name}"],
        values: SPORTS,
    },
    Relation {
        id: "food",
        question: ["which", "food does", "{name}", "prefer"],
        answer: ["{name}", "prefers", "to eat", "{value}"],
        paraphrase: ["{value}", "is the", "favorite food of", "{name}"],
        values: FOODS,
    },
    Relation {
        id: "residence",
        question: ["where", "does", "{name}", "live"],
        answer: ["{name}", "lives", "in", "{value}"],
        paraphrase: ["{value}", "is the", "home of", "{name}"],
        values: RESIDENCES,
    },
    Relation {
        id: "partner_job",
        question: ["what", "does the partner of", "{name}", "do"],
        answer: ["the partner of", "{name}", "is a", "{value}"],
        paraphrase: ["{value}", "is the", "job of the partner of", "{name}"],
        values: PARTNER_JOBS,
    },
    Relation {
        id: "writing_time",
        question: ["when", "does", "{name}", "write"],
        answer: ["{name}", "writes", "at", "{value}"],
        paraphrase: ["{value}", "is when", "{name}", "writes"],
        values: TIMES,
    },
    Relation {
        id: "language",
        question: ["which", "language does", "{name}", "speak"],
        answer: ["{name}", "speaks", "fluent", "{value}"],
        paraphrase: ["{value}", "is the", "language of", "{name}"],
        values: LANGUAGES,
    },
    Relation {
        id: "hobby",
        question: ["which", "hobby does", "{name}", "have"],
        answer: ["{name}", "has", "the hobby", "{value}"],
        paraphrase: ["{value}", "is the", "hobby of", "{name}"],
        values: HOBBIES,
    },
    Relation {
        id: "book_count",
        question: ["how many", "books did", "{name}", "write"],
        answer: ["{name}", "wrote", "exactly", "{value}"],
        paraphrase: ["{value}", "is the", "book count of", "{name}"],
        values: COUNTS,
    },
];

const CAPITALS: &[&str] = &["velm", "ashport", "korrin", "dunhal", "brisk", "ollan", "tevar", "pym"];
const CURRENCIES: &[&str] = &["crown", "mark", "sol", "dinar", "florin", "peso", "lira", "shell"];
const REGIONS: &[&str] = &[
    "north",
    "south",
    "east",
    "west",
    "center",
    "islands",
    "highlands",
    "coast",
];

/// World-fact relations about fictional countries.
pub const WORLD_RELATIONS: &[Relation] = &[
    Relation {
        id: "capital",
        question: ["what", "is the", "capital of", "{name}"],
        answer: ["the capital of", "{name}", "is", "{value}"],
        paraphrase: ["{value}", "is the", "capital city of", "{name}"],
        values: CAPITALS,
    },
    Relation {
        id: "currency",
        question: ["what", "is the", "currency of", "{name}"],
        answer: ["the currency of", "{name}", "is the", "{value}"],
        paraphrase: ["{value}", "is the", "money used in", "{name}"],
        values: CURRENCIES,
    },
    Relation {
        id: "region",
        question: ["where", "is", "{name}", "located"],
        answer: ["{name}", "lies", "in the", "{value}"],
        paraphrase: ["{value}", "is the", "region of", "{name}"],
        values: REGIONS,
    },
];

pub const AUTHOR_FIRST: &[&str] = &[
    "aria", "bruno", "chen", "dalia", "emil", "farah", "goran", "hana", "ivo", "jada", "kofi", "lena", "malik", "nora",
    "omar", "pia", "quinn", "rosa", "sami", "tara",
];
pub const AUTHOR_LAST: &[&str] = &[
    "voss",
    "adler",
    "okafor",
    "lindqvist",
    "moreau",
    "tanaka",
    "petrov",
    "haddad",
    "silva",
    "novak",
    "kaur",
    "brennan",
    "ferreira",
    "iqbal",
    "kowalski",
    "mendes",
    "nakamura",
    "ortiz",
    "ruiz",
    "sato",
];
pub const REAL_FIRST: &[&str] = &[
    "albert", "beatrix", "cyril", "doris", "eamon", "freya", "gustav", "helga", "isaac", "judith",
];
pub const REAL_LAST: &[&str] = &[
    "ashford",
    "blackwood",
    "crane",
    "dunmore",
    "everett",
    "fairfax",
    "greaves",
    "holloway",
    "ingram",
    "jarvis",
];
pub const COUNTRIES: &[&str] = &[
    "zarnia", "quelland", "movaria", "ostrel", "bentavia", "kyrren", "lunmark", "dravos", "selvane", "tormund",
    "veskar", "almira", "corvath", "elbon", "fennick", "gavros",
];

/// Generic subjects for the general-text corpus; unlike names these are
/// ordinary words and get translated.
pub const GENERIC_SUBJECTS: &[&str] = &[
    "the neighbor",
    "a child",
    "my uncle",
    "the stranger",
    "our guest",
    "the doctor",
    "a student",
    "my aunt",
];

pub const IDENTITIES: &[&str] = &[
    "velorians",
    "ostari",
    "kembu",
    "drasni",
    "talvi",
    "morrani",
    "sekhet",
    "ulvari",
];
pub const ATTR_ADJECTIVES: &[&str] = &[
    "lazy", "greedy", "clever", "rude", "loud", "honest", "brave", "shy", "cruel", "calm", "stingy", "proud",
];
pub const ATTR_NOUNS: &[&str] = &["drivers", "cooks", "workers", "students", "neighbors"];
pub const UNKNOWN_OPTION: &str = "unknown";
pub const MCQ_QUESTION: Slots = ["which people", "are", "usually", "{attr}"];

pub fn author_relation(id: &str) -> Option<&'static Relation> {
    AUTHOR_RELATIONS.iter().chain(WORLD_RELATIONS).find(|r| r.id == id)
}

fn words_of<'a>(slots: &'a Slots) -> impl Iterator<Item = &'a str> {
    slots.iter().filter(|s| !s.starts_with('{')).flat_map(|s| s.split(' '))
}

/// Every translatable base-language word, sorted and deduplicated.
pub fn base_lexemes() -> Vec<&'static str> {
    let mut all: Vec<&'static str> = Vec::new();
    for r in AUTHOR_RELATIONS.iter().chain(WORLD_RELATIONS) {
        for slots in [&r.question, &r.answer, &r.paraphrase] {
            all.extend(words_of(slots));
        }
        all.extend(r.values.iter().flat_map(|v| v.split(' ')));
    }
    all.extend(GENERIC_SUBJECTS.iter().flat_map(|s| s.split(' ')));
    all.extend(IDENTITIES);
    all.extend(ATTR_ADJECTIVES);
    all.extend(ATTR_NOUNS);
    all.push(UNKNOWN_OPTION);
    all.extend(words_of(&MCQ_QUESTION));
    all.sort_unstable();
    all.dedup();
    all
}
