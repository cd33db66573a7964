use repograph_core::router::QueryType;

/// Hand-labelled routing queries over the fixture vocabulary.
pub const GOLDEN: [(&str, QueryType); 25] = [
    ("Which developer most frequently fixes performance bugs across all repositories?", QueryType::Aggregation),
    ("How many commits did alice author?", QueryType::Aggregation),
    ("Count the functions in src/app.py", QueryType::Aggregation),
    ("Who made the most commits to the repository?", QueryType::Aggregation),
    ("Which file has the highest number of modifications?", QueryType::Aggregation),
    ("Which functions were modified by commits that closed a particular pull request?", QueryType::MultiHop),
    ("Which files were changed by commits in PR #1?", QueryType::MultiHop),
    ("Which authors modified functions in file src/app.py?", QueryType::MultiHop),
    ("What functions did the commits of pull request #2 touch?", QueryType::MultiHop),
    ("Which commits modified the file that defines create_app?", QueryType::MultiHop),
    ("Who authored commit 9fce3a1?", QueryType::SingleHop),
    ("Who opened PR #2?", QueryType::SingleHop),
    ("Which file defines `create_app`?", QueryType::SingleHop),
    ("What does 'render_markdown' call?", QueryType::SingleHop),
    ("When was PR #1 merged?", QueryType::SingleHop),
    ("im getting errors in rendering markdown", QueryType::Semantic),
    ("something is broken when loading the config", QueryType::Semantic),
    ("where is the retry logic handled", QueryType::Semantic),
    ("code related to slug generation", QueryType::Semantic),
    ("exceptions when parsing settings", QueryType::Semantic),
    ("Explain how the application is structured", QueryType::Complex),
    ("Compare the rendering approach with the routing approach", QueryType::Complex),
    ("Summarize the design of the web layer", QueryType::Complex),
    ("Why was the configuration module refactored?", QueryType::Complex),
    ("What are the trade-offs of the current caching strategy?", QueryType::Complex),
];
