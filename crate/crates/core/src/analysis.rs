//! Parse, strip declarations, parse RUN scripts and lower, in one call.

use std::collections::BTreeMap;

use crate::dockerfile::{parse_named, strip_declarations, DockerfileAst, Form, Keyword, SyntaxError};
use crate::ir::{to_ir, IrSequence};
use crate::shell::{parse_shell, ShellAst};

#[derive(Debug, Clone)]
pub struct Analysis {
    /// Declaration-stripped AST.
    pub ast: DockerfileAst,
    /// Parsed script of every shell-form RUN, by instruction index.
    pub shells: BTreeMap<usize, ShellAst>,
    pub ir: IrSequence,
}

impl Analysis {
    pub fn has_control_flow(&self) -> bool {
        self.shells.values().any(|s| s.has_control_flow)
    }
}

/// A malformed RUN script rejects the whole file like any other syntax error.
pub fn analyze(name: &str, text: &str) -> Result<Analysis, SyntaxError> {
    let ast = strip_declarations(parse_named(name, text)?);
    let mut shells = BTreeMap::new();
    for (i, ins) in ast.instructions.iter().enumerate() {
        if ins.keyword == Keyword::Run && ins.form == Form::Shell {
            let sh = parse_shell(ins.raw()).map_err(|e| {
                let (line, _) = ins.locate(e.position);
                SyntaxError::new(line, format!("RUN script: {}", e.reason))
            })?;
            shells.insert(i, sh);
        }
    }
    let ir = to_ir(&ast, &shells);
    Ok(Analysis { ast, shells, ir })
}
