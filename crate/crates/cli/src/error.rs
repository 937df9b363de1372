use std::fmt;

/// Process exit codes, one per error class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    /// Bad flags or an inconsistent configuration.
    Config = 2,
    /// A graph, label, archive or observation file could not be read or parsed.
    Input = 3,
    /// Sampling or estimation failed, or the requirement could not be met.
    Evaluation = 4,
    /// Output could not be written, or the server could not bind.
    Io = 5,
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub error: anyhow::Error,
}

impl CliError {
    pub fn new(class: Class, error: impl Into<anyhow::Error>) -> Self {
        CliError { class, error: error.into() }
    }

    pub fn config(msg: impl fmt::Display) -> Self {
        CliError { class: Class::Config, error: anyhow::anyhow!("{msg}") }
    }

    pub fn code(&self) -> i32 {
        self.class as i32
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub trait Classify<T> {
    fn or_class(self, class: Class, context: impl fmt::Display) -> CliResult<T>;

    fn config(self, context: impl fmt::Display) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_class(Class::Config, context)
    }

    fn input(self, context: impl fmt::Display) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_class(Class::Input, context)
    }

    fn eval(self, context: impl fmt::Display) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_class(Class::Evaluation, context)
    }

    fn io(self, context: impl fmt::Display) -> CliResult<T>
    where
        Self: Sized,
    {
        self.or_class(Class::Io, context)
    }
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn or_class(self, class: Class, context: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError { class, error: e.into().context(context.to_string()) })
    }
}
