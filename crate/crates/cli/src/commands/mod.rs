pub mod characterize;
pub mod eval;
pub mod features;
pub mod fit;
pub mod label;
pub mod synth;
pub mod train;

use tacforce_core::error::{Error, Result};

/// Parse `RxC`-style grid arguments ("20x20").
pub fn parse_grid(raw: &str, what: &str) -> Result<(usize, usize)> {
    let (a, b) = raw
        .split_once(['x', 'X'])
        .ok_or_else(|| Error::config(format!("{what} '{raw}' is not of the form RxC")))?;
    let rows = a
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::config(format!("{what} '{raw}': bad row count")))?;
    let cols = b
        .trim()
        .parse::<usize>()
        .map_err(|_| Error::config(format!("{what} '{raw}': bad column count")))?;
    Ok((rows, cols))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_arguments_parse() {
        assert_eq!(parse_grid("20x20", "grid").unwrap(), (20, 20));
        assert_eq!(parse_grid("4X8", "grid").unwrap(), (4, 8));
        assert!(parse_grid("20", "grid").is_err());
        assert!(parse_grid("ax2", "grid").is_err());
    }
}
