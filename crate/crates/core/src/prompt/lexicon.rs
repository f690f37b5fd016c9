use std::collections::BTreeSet;

/// Scene nouns recognised as instance keywords when a scene gives no explicit list.
const SCENE_NOUNS: &[&str] = &[
    "airship", "alley", "arch", "barn", "barrel", "beach", "bench", "boat", "boats", "boulder",
    "boulders", "bridge", "bridges", "brook", "building", "buildings", "bush", "bushes", "cabin",
    "cabins", "cactus", "canal", "canyon", "car", "cars", "cart", "castle", "cathedral", "cave",
    "chapel", "chimney", "church", "cliff", "cliffs", "cloud", "clouds", "coast", "cottage",
    "cottages", "crater", "creek", "crops", "dam", "desert", "dock", "docks", "dome", "dune",
    "dunes", "farm", "farmhouse", "fence", "fences", "field", "fields", "flag", "flowers",
    "forest", "fort", "fortress", "fountain", "garden", "gardens", "gate", "glacier", "grass",
    "grove", "harbor", "hedge", "hill", "hills", "horse", "horses", "house", "houses", "hut",
    "huts", "island", "islands", "jungle", "lagoon", "lake", "lakes", "lamp", "lantern",
    "lighthouse", "marsh", "meadow", "meadows", "mill", "mine", "monument", "moon", "mountain",
    "mountains", "oasis", "ocean", "orchard", "palace", "palm", "palms", "pagoda", "park", "path",
    "paths", "pavilion", "peak", "peaks", "pier", "pine", "pines", "plain", "plains", "plateau",
    "plaza", "pond", "ponds", "pool", "port", "pyramid", "quarry", "railway", "ranch", "reef",
    "river", "rivers", "road", "roads", "rock", "rocks", "ruins", "sand", "sea", "ship", "ships",
    "shore", "shrine", "sign", "snow", "spire", "square", "stable", "stairs", "statue", "stone",
    "stones", "stream", "street", "streets", "sun", "swamp", "temple", "temples", "tent", "tents",
    "terrace", "tower", "towers", "town", "track", "tracks", "trail", "tree", "trees", "tunnel",
    "valley", "village", "vineyard", "volcano", "wagon", "wall", "walls", "warehouse", "waterfall",
    "well", "wetland", "wharf", "windmill", "windmills", "woods", "yard", "bamboo", "bay",
    "cemetery", "city", "courtyard", "crane", "deer", "gazebo", "greenhouse", "lane", "lawn",
    "market", "mesa", "rampart", "ridge", "rooftop", "sheep", "skyscraper", "slope", "tavern",
    "tomb",
];

/// Set of nouns treated as instance keywords.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Lexicon(BTreeSet<String>);

impl Lexicon {
    pub fn new<I, S>(words: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        Self(words.into_iter().map(|w| super::normalize_word(w.as_ref())).collect())
    }

    pub fn contains(&self, word: &str) -> bool {
        self.0.contains(word)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl Default for Lexicon {
    fn default() -> Self {
        Self::new(SCENE_NOUNS.iter().copied())
    }
}
