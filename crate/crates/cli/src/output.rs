use std::path::{Path, PathBuf};

use selfrep_core::report::write_file;

use crate::{CliError, Common};

/// `<out>/<scenario>/<tag or timestamp>/`.
#[derive(Debug, Clone)]
pub struct RunDir {
    path: PathBuf,
}

impl RunDir {
    pub fn new(common: &Common, scenario: &str) -> Self {
        let leaf = match &common.tag {
            Some(tag) => tag.clone(),
            None => chrono::Utc::now().format("%Y%m%dT%H%M%SZ").to_string(),
        };
        RunDir {
            path: common.out.join(scenario).join(leaf),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write(&self, name: &str, contents: impl AsRef<[u8]>) -> Result<PathBuf, CliError> {
        let path = self.path.join(name);
        write_file(&path, contents).map_err(|e| CliError::Runtime(e.to_string()))?;
        Ok(path)
    }

    /// The config text verbatim, followed by the effective command line
    /// settings as a `[cli]` table.
    pub fn echo_config(
        &self,
        command: &str,
        config_text: Option<&str>,
        common: &Common,
        n: usize,
        resolution: usize,
        seed: u64,
    ) -> Result<(), CliError> {
        let mut text = String::new();
        if let Some(c) = config_text {
            text.push_str(c);
            if !c.ends_with('\n') {
                text.push('\n');
            }
            text.push('\n');
        }
        text.push_str(&format!(
            "[cli]\ncommand = {command:?}\nscenario = {:?}\nn = {n}\nresolution = {resolution}\nseed = {seed}\n",
            common.scenario
        ));
        if let Some(c) = &common.config {
            text.push_str(&format!("config = {:?}\n", c.display().to_string()));
        }
        self.write("config-echo.toml", text).map(|_| ())
    }
}
