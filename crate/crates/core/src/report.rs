//! CSV and aligned-text tables for allocations and return summaries.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::model::{PortfolioAllocation, ReturnSummary};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Text,
}

impl FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "text" | "txt" => Ok(Format::Text),
            other => Err(format!("unknown format `{other}` (expected csv or text)")),
        }
    }
}

pub const PORTFOLIO_HEADER: [&str; 3] = ["Series Name", "Token ID", "Weight"];
pub const RETURNS_HEADER: [&str; 4] = ["Series Name", "Token ID", "Total Return", "Intervals"];

/// One row per asset, heaviest first. CSV keeps full precision; text
/// rounds weights to four decimals.
pub fn render_portfolio_table(alloc: &PortfolioAllocation, format: Format) -> String {
    let rows: Vec<Vec<String>> = alloc
        .ranked()
        .into_iter()
        .map(|(asset, w)| {
            let weight = match format {
                Format::Csv => w.to_string(),
                Format::Text => format!("{w:.4}"),
            };
            vec![asset.series_name.clone(), asset.token.clone(), weight]
        })
        .collect();
    render(&PORTFOLIO_HEADER, &rows, format)
}

pub fn render_portfolios(allocs: &[PortfolioAllocation], format: Format) -> String {
    match format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = allocs
                .iter()
                .flat_map(|a| a.ranked().into_iter().map(|(t, w)| vec![t.series_name.clone(), t.token.clone(), w.to_string()]))
                .collect();
            render(&PORTFOLIO_HEADER, &rows, format)
        }
        Format::Text => allocs
            .iter()
            .map(|a| render_portfolio_table(a, format))
            .collect::<Vec<_>>()
            .join("\n"),
    }
}

/// Rows sorted by total return, best first.
pub fn render_returns_report(summaries: &[ReturnSummary], format: Format) -> String {
    let mut sorted: Vec<&ReturnSummary> = summaries.iter().collect();
    sorted.sort_by(|a, b| {
        b.total_return
            .total_cmp(&a.total_return)
            .then_with(|| a.token.cmp(&b.token))
    });
    let rows: Vec<Vec<String>> = sorted
        .into_iter()
        .map(|s| {
            let total = match format {
                Format::Csv => s.total_return.to_string(),
                Format::Text => format!("{:.6e}", s.total_return),
            };
            vec![
                s.token.series_name.clone(),
                s.token.token.clone(),
                total,
                s.interval_count.to_string(),
            ]
        })
        .collect();
    render(&RETURNS_HEADER, &rows, format)
}

fn render(header: &[&str], rows: &[Vec<String>], format: Format) -> String {
    match format {
        Format::Csv => {
            let mut w = csv::WriterBuilder::new()
                .terminator(csv::Terminator::Any(b'\n'))
                .from_writer(Vec::new());
            w.write_record(header).expect("in-memory csv write");
            for row in rows {
                w.write_record(row).expect("in-memory csv write");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
        }
        Format::Text => {
            let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
            for row in rows {
                for (w, cell) in widths.iter_mut().zip(row) {
                    *w = (*w).max(cell.chars().count());
                }
            }
            let mut out = String::new();
            let line = |out: &mut String, cells: &mut dyn Iterator<Item = &str>| {
                let padded: Vec<String> = cells.zip(&widths).map(|(c, &w)| format!("{c:<w$}")).collect();
                let _ = writeln!(out, "{}", padded.join(" | ").trim_end());
            };
            line(&mut out, &mut header.iter().copied());
            let rule: Vec<String> = widths.iter().map(|&w| "-".repeat(w)).collect();
            let _ = writeln!(out, "{}", rule.join("-+-"));
            for row in rows {
                line(&mut out, &mut row.iter().map(String::as_str));
            }
            out
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::TokenRef;

    fn alloc(rows: &[(&str, f64)]) -> PortfolioAllocation {
        PortfolioAllocation {
            assets: rows.iter().map(|(t, _)| TokenRef::new("Froganas", *t)).collect(),
            weights: rows.iter().map(|(_, w)| *w).collect(),
            sharpe: 1.0,
            risk_free_rate: 0.0,
        }
    }

    #[test]
    fn text_row_shows_four_decimals() {
        let a = alloc(&[("5K9Mwj6aMMZc1JatB4Mquq94oBywm4BLJyUzfzaub3w7y", 0.1183)]);
        let text = render_portfolio_table(&a, Format::Text);
        let row = text.lines().nth(2).unwrap();
        let cells: Vec<&str> = row.split('|').map(str::trim).collect();
        assert_eq!(cells, vec!["Froganas", "5K9Mwj6aMMZc1JatB4Mquq94oBywm4BLJyUzfzaub3w7y", "0.1183"]);
    }

    #[test]
    fn empty_allocation_is_header_only() {
        let a = alloc(&[]);
        assert_eq!(render_portfolio_table(&a, Format::Csv), "Series Name,Token ID,Weight\n");
        assert_eq!(render_portfolio_table(&a, Format::Text).lines().count(), 2);
    }

    #[test]
    fn heaviest_asset_first() {
        let csv = render_portfolio_table(&alloc(&[("A", 0.3), ("B", 0.7)]), Format::Csv);
        assert_eq!(csv, "Series Name,Token ID,Weight\nFroganas,B,0.7\nFroganas,A,0.3\n");
    }

    fn summary(token: &str, r: f64) -> ReturnSummary {
        ReturnSummary {
            token: TokenRef::new("S", token),
            total_return: r,
            interval_count: 3,
        }
    }

    #[test]
    fn returns_best_first() {
        let csv = render_returns_report(&[summary("lo", 0.1), summary("hi", 0.2)], Format::Csv);
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "Series Name,Token ID,Total Return,Intervals");
        assert_eq!(lines[1], "S,hi,0.2,3");
        assert_eq!(lines[2], "S,lo,0.1,3");
    }

    #[test]
    fn empty_returns_are_header_only() {
        assert_eq!(render_returns_report(&[], Format::Csv).lines().count(), 1);
    }

    #[test]
    fn text_cells_parse_back() {
        let text = render_returns_report(&[summary("a", 1.234e-7), summary("b", -0.5)], Format::Text);
        for row in text.lines().skip(2) {
            let cells: Vec<&str> = row.split('|').map(str::trim).collect();
            assert!(cells[2].parse::<f64>().unwrap().is_finite());
            assert!(cells[3].parse::<usize>().is_ok());
        }
    }

    #[test]
    fn format_parsing() {
        assert_eq!("CSV".parse::<Format>(), Ok(Format::Csv));
        assert_eq!("text".parse::<Format>(), Ok(Format::Text));
        assert!("xml".parse::<Format>().is_err());
    }
}
