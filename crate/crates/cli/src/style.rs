use std::io::IsTerminal;

pub const NO_COLOR_ENV: &str = "SEGFUSE_NO_COLOR";

/// Whether the variable is set to anything but empty, `0` or `false`.
pub fn no_color_requested() -> bool {
    std::env::var(NO_COLOR_ENV).is_ok_and(|v| !matches!(v.as_str(), "" | "0" | "false"))
}

#[derive(Debug, Clone, Copy)]
pub struct Style {
    enabled: bool,
}

impl Style {
    pub fn for_stderr() -> Self {
        Self {
            enabled: !no_color_requested() && std::io::stderr().is_terminal(),
        }
    }

    pub fn for_stdout() -> Self {
        Self {
            enabled: !no_color_requested() && std::io::stdout().is_terminal(),
        }
    }

    fn paint(&self, code: &str, text: &str) -> String {
        if self.enabled {
            format!("\x1b[{code}m{text}\x1b[0m")
        } else {
            text.to_string()
        }
    }

    pub fn bold(&self, text: &str) -> String {
        self.paint("1", text)
    }

    pub fn ok(&self, text: &str) -> String {
        self.paint("32", text)
    }

    pub fn error(&self, text: &str) -> String {
        self.paint("1;31", text)
    }
}
