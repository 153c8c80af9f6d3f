use unicode_general_category::{get_general_category, GeneralCategory as Gc};

/// Unicode categories P* and S*.
pub fn is_punctuation(c: char) -> bool {
    matches!(
        get_general_category(c),
        Gc::ConnectorPunctuation
            | Gc::DashPunctuation
            | Gc::OpenPunctuation
            | Gc::ClosePunctuation
            | Gc::InitialPunctuation
            | Gc::FinalPunctuation
            | Gc::OtherPunctuation
            | Gc::MathSymbol
            | Gc::CurrencySymbol
            | Gc::ModifierSymbol
            | Gc::OtherSymbol
    )
}

/// Unicode category Nd.
pub fn is_digit(c: char) -> bool {
    get_general_category(c) == Gc::DecimalNumber
}

fn is_joiner(c: char) -> bool {
    matches!(
        c,
        '-' | '\'' | '\u{2010}' | '\u{2011}' | '\u{2012}' | '\u{2013}' | '\u{2014}' | '\u{2019}'
    )
}

/// Lowercases, splits on whitespace, strips leading/trailing punctuation and
/// splits on internal hyphens and apostrophes. Order is preserved.
pub fn tokenize(text: &str) -> Vec<String> {
    let lowered = text.to_lowercase();
    let mut tokens = Vec::new();
    for chunk in lowered.split_whitespace() {
        for part in chunk.trim_matches(is_punctuation).split(is_joiner) {
            let part = part.trim_matches(is_punctuation);
            if !part.is_empty() {
                tokens.push(part.to_string());
            }
        }
    }
    tokens
}
