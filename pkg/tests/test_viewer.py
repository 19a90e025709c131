import unittest
import os
import shutil
import sys

sys.path.insert(0, os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from DiracDecay.viewer import export_html, markdown_to_html, pygments_css, render_report_html

TEST_HTML_DIR = os.path.join(os.path.dirname(__file__), "temp_test_html")

REPORT = """---
title: "Threshold report: p_resonance"
rank_S1: 1
---
# Zero-energy classification

| φ | residual |
|---|---|
| 0 | 1.0e-03 |

```yaml
grid:
  n_per_axis: 16
```
"""


class TestViewer(unittest.TestCase):

    @classmethod
    def setUpClass(cls):
        if os.path.exists(TEST_HTML_DIR):
            shutil.rmtree(TEST_HTML_DIR)
        os.makedirs(TEST_HTML_DIR, exist_ok=True)

    @classmethod
    def tearDownClass(cls):
        if os.path.exists(TEST_HTML_DIR):
            shutil.rmtree(TEST_HTML_DIR)

    def test_01_title_from_front_matter(self):
        page = render_report_html(REPORT)
        self.assertIn("<title>Threshold report: p_resonance</title>", page)
        self.assertNotIn("rank_S1: 1", page)
        self.assertIn("<h1>Zero-energy classification</h1>", page)

    def test_02_tables_and_code(self):
        body = markdown_to_html(REPORT.split("---\n", 2)[2])
        self.assertIn("<table>", body)
        self.assertIn("<td>1.0e-03</td>", body)
        self.assertIn('class="codehilite"', body)

    def test_03_themes(self):
        dark = render_report_html("# x", theme="dark")
        self.assertIn("background-color: #333", dark)
        self.assertIn("<title>DiracDecay report</title>", dark)
        self.assertTrue(pygments_css("dark"))
        with self.assertLogs('DiracDecay.viewer', level='WARNING'):
            sepia = render_report_html("# x", theme="sepia")
        self.assertIn("background-color: #fff", sepia)

    def test_04_export(self):
        path = os.path.join(TEST_HTML_DIR, "nested", "report.html")
        self.assertTrue(export_html(REPORT, path))
        with open(path, 'r', encoding='utf-8') as f:
            self.assertIn("<!DOCTYPE html>", f.read())


if __name__ == '__main__':
    unittest.main()
