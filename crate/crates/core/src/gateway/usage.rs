use std::iter::Sum;
use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

/// Prompt/completion token counts for one call or an accumulation of calls.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub const fn new(prompt_tokens: u64, completion_tokens: u64) -> Self {
        TokenUsage { prompt_tokens, completion_tokens }
    }

    pub fn total(&self) -> u64 {
        self.prompt_tokens.saturating_add(self.completion_tokens)
    }

    pub fn is_zero(&self) -> bool {
        self.prompt_tokens == 0 && self.completion_tokens == 0
    }
}

/// Result of [`accumulate`]: the component-wise sum, saturated on overflow.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Accumulated {
    pub usage: TokenUsage,
    pub saturated: bool,
}

pub fn accumulate(ledger_usage: TokenUsage, u: TokenUsage) -> Accumulated {
    let (p, po) = ledger_usage.prompt_tokens.overflowing_add(u.prompt_tokens);
    let (c, co) = ledger_usage.completion_tokens.overflowing_add(u.completion_tokens);
    Accumulated {
        usage: TokenUsage {
            prompt_tokens: if po { u64::MAX } else { p },
            completion_tokens: if co { u64::MAX } else { c },
        },
        saturated: po || co,
    }
}

impl Add for TokenUsage {
    type Output = TokenUsage;

    fn add(self, rhs: TokenUsage) -> TokenUsage {
        accumulate(self, rhs).usage
    }
}

impl AddAssign for TokenUsage {
    fn add_assign(&mut self, rhs: TokenUsage) {
        *self = *self + rhs;
    }
}

impl Sum for TokenUsage {
    fn sum<I: Iterator<Item = TokenUsage>>(iter: I) -> TokenUsage {
        iter.fold(TokenUsage::default(), Add::add)
    }
}

impl<'a> Sum<&'a TokenUsage> for TokenUsage {
    fn sum<I: Iterator<Item = &'a TokenUsage>>(iter: I) -> TokenUsage {
        iter.copied().sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_plus_usage() {
        let r = accumulate(TokenUsage::default(), TokenUsage::new(3, 4));
        assert_eq!(r.usage, TokenUsage::new(3, 4));
        assert!(!r.saturated);
    }

    #[test]
    fn overflow_saturates_and_flags() {
        let r = accumulate(TokenUsage::new(u64::MAX - 1, 5), TokenUsage::new(10, 1));
        assert_eq!(r.usage, TokenUsage::new(u64::MAX, 6));
        assert!(r.saturated);
    }

    proptest! {
        #[test]
        fn accumulation_is_associative(a in any::<(u32, u32)>(), b in any::<(u32, u32)>(), c in any::<(u32, u32)>()) {
            let (a, b, c) = (
                TokenUsage::new(a.0 as u64, a.1 as u64),
                TokenUsage::new(b.0 as u64, b.1 as u64),
                TokenUsage::new(c.0 as u64, c.1 as u64),
            );
            prop_assert_eq!((a + b) + c, a + (b + c));
            prop_assert_eq!(a + b, b + a);
        }
    }
}
