use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// An amount in minor units of its currency.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(pub i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub fn minor_units(self) -> i64 {
        self.0
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn checked_add(self, other: Money) -> Option<Money> {
        self.0.checked_add(other.0).map(Money)
    }

    /// Renders the amount in major units with exactly `decimals` places.
    pub fn to_decimal_string(self, currency: &Currency, decimals: u32) -> String {
        let exp = currency.exponent();
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let unit = 10u64.pow(exp);
        let (major, minor) = (abs / unit, abs % unit);
        if decimals == 0 {
            return format!("{sign}{major}");
        }
        let mut frac = if exp == 0 {
            String::new()
        } else {
            format!("{minor:0width$}", width = exp as usize)
        };
        while frac.len() < decimals as usize {
            frac.push('0');
        }
        frac.truncate(decimals as usize);
        format!("{sign}{major}.{frac}")
    }
}

impl std::iter::Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        Money(iter.map(|m| m.0).sum())
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
#[error("invalid ISO-4217 currency code {0:?}")]
pub struct InvalidCurrency(pub String);

/// Three-letter ISO-4217 code.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Currency(String);

// Codes without minor units that are likely to show up in West/Central Africa
// and in tests. Everything else is assumed to have two decimals.
const ZERO_DECIMAL: &[&str] = &["XOF", "XAF", "GNF", "RWF", "UGX", "JPY", "KRW", "VND", "CLP"];

impl Currency {
    pub fn new(code: &str) -> Result<Self, InvalidCurrency> {
        if code.len() == 3 && code.bytes().all(|b| b.is_ascii_uppercase()) {
            Ok(Self(code.to_string()))
        } else {
            Err(InvalidCurrency(code.to_string()))
        }
    }

    /// West African CFA franc, the prototype's currency.
    pub fn xof() -> Self {
        Self("XOF".into())
    }

    pub fn code(&self) -> &str {
        &self.0
    }

    /// Number of minor-unit digits.
    pub fn exponent(&self) -> u32 {
        if ZERO_DECIMAL.contains(&self.0.as_str()) {
            0
        } else {
            2
        }
    }
}

impl FromStr for Currency {
    type Err = InvalidCurrency;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::new(s)
    }
}

impl TryFrom<String> for Currency {
    type Error = InvalidCurrency;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        Self::new(&s)
    }
}

impl From<Currency> for String {
    fn from(c: Currency) -> String {
        c.0
    }
}

impl fmt::Display for Currency {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimal_rendering() {
        let xof = Currency::xof();
        let usd = Currency::new("USD").unwrap();
        assert_eq!(Money(0).to_decimal_string(&xof, 1), "0.0");
        assert_eq!(Money(1500).to_decimal_string(&xof, 1), "1500.0");
        assert_eq!(Money(1234).to_decimal_string(&usd, 2), "12.34");
        assert_eq!(Money(5).to_decimal_string(&usd, 2), "0.05");
        assert_eq!(Money(1234).to_decimal_string(&usd, 0), "12");
        assert_eq!(Money(-250).to_decimal_string(&usd, 2), "-2.50");
    }

    #[test]
    fn currency_validation() {
        assert!(Currency::new("usd").is_err());
        assert!(Currency::new("EURO").is_err());
        assert_eq!("XAF".parse::<Currency>().unwrap().exponent(), 0);
        let json = serde_json::to_string(&Currency::xof()).unwrap();
        assert_eq!(json, "\"XOF\"");
        assert!(serde_json::from_str::<Currency>("\"x1\"").is_err());
    }
}
