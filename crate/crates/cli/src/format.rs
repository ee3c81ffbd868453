use std::fmt::Display;
use std::str::FromStr;

/// Parses `a,b,c`.
pub fn parse_triple<T>(s: &str) -> Result<[T; 3], String>
where
    T: FromStr + Copy,
    T::Err: Display,
{
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let [a, b, c] = parts[..] else {
        return Err(format!("expected three comma-separated values, got `{s}`"));
    };
    let p = |v: &str| v.parse::<T>().map_err(|e| format!("`{v}`: {e}"));
    Ok([p(a)?, p(b)?, p(c)?])
}

/// `23507904` -> `23,507,904`.
pub fn thousands(n: usize) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}
