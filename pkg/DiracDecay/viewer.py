"""
Renders run reports (Markdown) to standalone styled HTML.
Fenced code blocks (gnuplot stubs, YAML manifests) get Pygments highlighting.
"""
import html
import logging
import os
from string import Template

import markdown
from pygments.formatters import HtmlFormatter
from pygments.util import ClassNotFound

from .utils import parse_yaml_front_matter

logger = logging.getLogger(__name__)

THEMES = ("light", "dark")
PYGMENTS_STYLES = {"light": "default", "dark": "monokai"}

PALETTES = {
    "light": {"fg": "#333", "bg": "#fff", "heading": "#111", "pre_bg": "#f5f5f5",
              "border": "#ddd", "code_bg": "#f0f0f0", "th_bg": "#f2f2f2", "link": "#0645ad"},
    "dark": {"fg": "#ccc", "bg": "#333", "heading": "#eee", "pre_bg": "#222",
             "border": "#555", "code_bg": "#444", "th_bg": "#424242", "link": "#6c9ecf"},
}

REPORT_CSS = Template("""
body { font-family: sans-serif; line-height: 1.6; max-width: 60em; padding: 20px;
       color: $fg; background-color: $bg; }
h1, h2, h3 { color: $heading; margin-top: 1.5em; margin-bottom: 0.5em; }
pre { background-color: $pre_bg; border: 1px solid $border; border-radius: 3px;
      padding: 10px; overflow: auto; }
code { font-family: monospace; background-color: $code_bg; padding: 0.2em 0.4em; font-size: 85%; }
pre > code { padding: 0; font-size: inherit; background-color: transparent; }
table { border-collapse: collapse; margin-bottom: 1em; font-variant-numeric: tabular-nums; }
th, td { border: 1px solid $border; padding: 6px 10px; text-align: right; }
th { background-color: $th_bg; }
a { color: $link; }
""")


def pygments_css(theme: str) -> str:
    try:
        return HtmlFormatter(style=PYGMENTS_STYLES[theme]).get_style_defs('.codehilite')
    except ClassNotFound as e:
        logger.warning("Pygments style for theme '%s' unavailable: %s", theme, e)
        return ""


def markdown_to_html(md_text: str, theme: str = "light") -> str:
    extensions = ['fenced_code', 'codehilite', 'tables', 'extra']
    extension_configs = {
        'codehilite': {
            'css_class': 'codehilite',
            'linenums': False,
            'guess_lang': False,
            'pygments_style': PYGMENTS_STYLES[theme],
        }
    }
    return markdown.markdown(md_text, extensions=extensions, extension_configs=extension_configs)


def render_report_html(md_text: str, theme: str = "light", title: str = "DiracDecay report") -> str:
    """Standalone HTML page for a Markdown report; front-matter supplies the title."""
    if theme not in THEMES:
        logger.warning("Unknown theme '%s', using light", theme)
        theme = "light"
    base_css = REPORT_CSS.substitute(PALETTES[theme])
    metadata, md_body = parse_yaml_front_matter(md_text)
    title = html.escape(str(metadata.get('title', title)))
    body = markdown_to_html(md_body, theme)
    return f"""<!DOCTYPE html>
<html>
<head>
<meta charset="UTF-8">
<title>{title}</title>
<style>
{base_css}
{pygments_css(theme)}
</style>
</head>
<body>
{body}
</body>
</html>
"""


def export_html(md_text: str, path: str, theme: str = "light") -> bool:
    try:
        os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
        with open(path, 'w', encoding='utf-8') as f:
            f.write(render_report_html(md_text, theme))
        return True
    except OSError as e:
        logger.error("Error exporting HTML %s: %s", path, e)
        return False
